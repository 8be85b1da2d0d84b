from __future__ import annotations

from rxivmd.diagnostics import Diagnostics


def test_items_sorted_by_file_line_code():
    diag = Diagnostics()
    diag.error("ZCode", "later file", file="b.md", line=1)
    diag.warning("ACode", "early file late line", file="a.md", line=9)
    diag.notice("BCode", "early file early line", file="a.md", line=2)
    diag.error("ACode", "no location")
    ordering = [(d.file, d.line, d.code) for d in diag.items]
    assert ordering == [
        (None, None, "ACode"),
        ("a.md", 2, "BCode"),
        ("a.md", 9, "ACode"),
        ("b.md", 1, "ZCode"),
    ]


def test_severity_buckets_and_flags():
    diag = Diagnostics()
    assert not diag.has_errors()
    diag.warning("W", "warn")
    diag.notice("N", "note")
    assert not diag.has_errors()
    diag.error("E", "boom")
    assert diag.has_errors()
    assert [d.code for d in diag.errors] == ["E"]
    assert [d.code for d in diag.warnings] == ["W"]
    assert [d.code for d in diag.notices] == ["N"]


def test_extend_merges_items():
    first = Diagnostics()
    first.error("A", "one")
    second = Diagnostics()
    second.warning("B", "two")
    first.extend(second)
    assert len(first) == 2


def test_format_includes_location():
    diag = Diagnostics()
    diag.error("Code", "message", file="doc.md", line=3)
    assert diag.items[0].format() == "error: Code: message [doc.md:3]"
