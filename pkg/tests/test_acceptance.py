"""Acceptance suite: one test per release criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
PASS lines.
"""

from __future__ import annotations

import random
import re
import shutil
import time

import pytest

from rxivmd.cli import cli
from rxivmd.convert import convert_document
from rxivmd.diagnostics import Diagnostics
from rxivmd.figgen import CacheManifest, generate_all, scan_figures
from rxivmd.pipeline import build, BuildPlan
from rxivmd.protect import ProtectionKind, protect, restore
from rxivmd.refs import (
    BibEntry,
    LabelIndex,
    build_label_index,
    parse_bibtex,
    validate_references,
)

from conftest import FIXTURES, invocation_count
from test_protect import generate_document

MINIMAL = FIXTURES / "minimal"


def _passed(number: int, title: str) -> None:
    print(f"ACCEPTANCE {number} PASS: {title}")


# ---------------------------------------------------------------------------
# Criterion 1: the full element-mapping corpus converts with exact string
# equality in under a second.

CORPUS_INDEX = LabelIndex(
    {
        "fig:label": "fig",
        "sfig:label": "sfig",
        "table:label": "table",
        "stable:label": "stable",
        "eq:label": "eq",
        "snote:label": "snote",
    }
)
CORPUS_BIB = [BibEntry(k, "misc") for k in ("citation", "cite1", "cite2")]

TABLE_INPUT = "| a | b |\n|:--|--:|\n| 1 | 2 |"
TABLE_EXPECTED = (
    "\\begin{table}[t]\n"
    "\\centering\n"
    "\\begin{tabular}{lr}\n"
    "\\hline\n"
    "a & b \\\\\n"
    "\\hline\n"
    "1 & 2 \\\\\n"
    "\\hline\n"
    "\\end{tabular}\n"
    "\\end{table}"
)
FIGURE_INPUT = "![A system overview.](FIGURES/fig1.pdf){#fig:label}"
FIGURE_EXPECTED = (
    "\\begin{figure}[t]\n"
    "\\centering\n"
    "\\includegraphics[width=1.0\\linewidth]{FIGURES/fig1.pdf}\n"
    "\\caption{A system overview.}\n"
    "\\label{fig:label}\n"
    "\\end{figure}"
)

SYNTAX_TABLE_CASES = [
    ("bold", "**bold text**", "\\textbf{bold text}"),
    ("italic", "*italic text*", "\\textit{italic text}"),
    ("subscript", "~subscript~", "\\textsubscript{subscript}"),
    ("superscript", "^superscript^", "\\textsuperscript{superscript}"),
    ("header 1", "# Header 1", "\\section{Header 1}"),
    ("header 2", "## Header 2", "\\subsection{Header 2}"),
    ("header 3", "### Header 3", "\\subsubsection{Header 3}"),
    ("unordered list", "- list item", "\\begin{itemize}\n\\item list item\n\\end{itemize}"),
    ("ordered list", "1. list item", "\\begin{enumerate}\n\\item list item\n\\end{enumerate}"),
    ("link", "[link text](url)", "\\href{url}{link text}"),
    ("bare url", "https://example.com", "\\url{https://example.com}"),
    ("citation", "@citation", "\\cite{citation}"),
    ("citation group", "[@cite1;@cite2]", "\\cite{cite1,cite2}"),
    ("fig ref", "@fig:label", "\\ref{fig:label}"),
    ("sfig ref", "@sfig:label", "\\ref{sfig:label}"),
    ("table ref", "@table:label", "\\ref{table:label}"),
    ("stable ref", "@stable:label", "\\ref{stable:label}"),
    ("eq ref", "@eq:label", "\\eqref{eq:label}"),
    ("snote ref", "@snote:label", "\\ref{snote:label}"),
    ("pipe table", TABLE_INPUT, TABLE_EXPECTED),
    ("figure", FIGURE_INPUT, FIGURE_EXPECTED),
    ("comment", "<!-- comment -->", "% comment"),
    ("newpage", "<newpage>", "\\newpage"),
    ("clearpage", "<clearpage>", "\\clearpage"),
]


def test_criterion_1_syntax_table_corpus():
    assert len(SYNTAX_TABLE_CASES) >= 22
    started = time.monotonic()
    for name, source, expected in SYNTAX_TABLE_CASES:
        fragment, diag = convert_document(source, CORPUS_INDEX, CORPUS_BIB)
        assert fragment.content == expected, f"case {name!r}: {fragment.content!r}"
        assert not diag.has_errors(), f"case {name!r} raised errors"
    elapsed = time.monotonic() - started
    assert elapsed < 1.0, f"corpus took {elapsed:.2f}s"
    _passed(1, f"{len(SYNTAX_TABLE_CASES)} element-mapping cases, exact equality, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# Criterion 2: protection round-trip on >= 10^4 generated documents, and
# byte-exact math/code survival through full conversion on all of them.

def test_criterion_2_protection_round_trip():
    rng = random.Random(424242)
    empty_index = LabelIndex()
    trials = 10_000
    for trial in range(trials):
        text = generate_document(rng, allow_comments=(trial % 5 == 0))
        doc = protect(text)
        if "<!--" not in text:
            assert restore(doc) == text, f"round-trip failed on trial {trial}"
        fragment, _ = convert_document(text, empty_index, [])
        for slot in doc.slots.values():
            if slot.kind in (ProtectionKind.inline_math, ProtectionKind.display_math):
                assert slot.original in fragment.content, f"math lost on trial {trial}"
            elif slot.kind is ProtectionKind.code_fence:
                body = slot.original.split("\n", 1)[1].rsplit("\n", 1)[0]
                assert body in fragment.content, f"fence body lost on trial {trial}"
            elif slot.kind is ProtectionKind.inline_code:
                inner = slot.original.strip("`")
                assert inner in fragment.content, f"inline code lost on trial {trial}"
    _passed(2, f"{trials} generated documents, zero round-trip or survival failures")


# ---------------------------------------------------------------------------
# Criterion 3: the four labeled fixture equations come out as equation
# environments with byte-identical bodies and matching labels.

def test_criterion_3_numbered_equation_fidelity():
    source = (MINIMAL / "01_MAIN.md").read_text(encoding="utf-8")
    expected = {
        label: body.strip()
        for body, label in re.findall(r"\$\$(.+?)\$\$ \{#(eq:[A-Za-z0-9_-]+)\}", source, re.DOTALL)
    }
    assert sorted(expected) == ["eq:einstein", "eq:equilibrium", "eq:navier_stokes", "eq:std_dev"]

    index, _ = build_label_index([source])
    fragment, _ = convert_document(source, index, [])
    environments = re.findall(
        r"\\begin\{equation\}\n(.+?)\n\\label\{(eq:[A-Za-z0-9_-]+)\}\n\\end\{equation\}",
        fragment.content,
        re.DOTALL,
    )
    assert len(environments) == 4
    for body, label in environments:
        assert body == expected[label], f"{label} body drifted"
    _passed(3, "four labeled equations, bodies byte-identical, labels attached")


# ---------------------------------------------------------------------------
# Criterion 4: reference resolution over the fixture manuscript: zero errors
# intact; removing any one label or bibliography entry yields exactly one
# error diagnostic naming it.

def _validate_docs(main: str, supp: str, bib_source: str) -> Diagnostics:
    index, idx_diag = build_label_index([main, supp])
    bib, _ = parse_bibtex(bib_source)
    occurrences = []
    merged = Diagnostics()
    merged.extend(idx_diag)
    for doc in (main, supp):
        fragment, _ = convert_document(doc, index, bib)
        occurrences.extend(fragment.citations)
    merged.extend(validate_references(occurrences, index, bib))
    return merged


def test_criterion_4_reference_resolution():
    main = (MINIMAL / "01_MAIN.md").read_text(encoding="utf-8")
    supp = (MINIMAL / "02_SUPPLEMENTARY.md").read_text(encoding="utf-8")
    bib_source = (MINIMAL / "03_REFERENCES.bib").read_text(encoding="utf-8")

    index, _ = build_label_index([main, supp])
    bib, _ = parse_bibtex(bib_source)
    assert len(index) == 10
    assert len(bib) == 8

    clean = _validate_docs(main, supp, bib_source)
    assert len(clean.errors) == 0

    for label in sorted(index.labels):
        pattern = re.compile(r"[ \t]*\{#" + re.escape(label) + r"[^}]*\}")
        removed_main = pattern.sub("", main, count=1)
        removed_supp = supp if removed_main != main else pattern.sub("", supp, count=1)
        assert (removed_main, removed_supp) != (main, supp), f"could not remove {label}"
        diag = _validate_docs(removed_main, removed_supp, bib_source)
        errors = diag.errors
        assert len(errors) == 1, f"{label}: expected 1 error, got {[e.message for e in errors]}"
        assert label in errors[0].message

    for entry in bib:
        blocks = [b for b in bib_source.split("\n\n") if b.strip()]
        kept = [b for b in blocks if not b.lstrip().startswith(f"@article{{{entry.key},")]
        assert len(kept) == len(blocks) - 1
        diag = _validate_docs(main, supp, "\n\n".join(kept))
        errors = diag.errors
        assert len(errors) == 1, f"{entry.key}: expected 1 error, got {[e.message for e in errors]}"
        assert entry.key in errors[0].message

    _passed(4, "10 labels + 8 citations resolve; every single removal yields exactly one named error")


# ---------------------------------------------------------------------------
# Criterion 5: cache behavior over three generator assets with an
# instrumented subprocess counter.

def test_criterion_5_cache_behavior(tmp_path, stub_commands):
    commands, counter = stub_commands
    figures = tmp_path / "FIGURES"
    figures.mkdir()
    (figures / "diagram.mmd").write_text("graph TD; a-->b\n")
    for name in ("first.py", "second.py"):
        (figures / name).write_text(
            f"open({str(counter)!r}, 'a').write('py\\n')\n"
            f"open('{name.removesuffix('.py')}.pdf', 'w').write('out')\n"
        )

    manifest = CacheManifest()
    manifest, _ = generate_all(scan_figures(figures), manifest, commands=commands)
    after_first = invocation_count(counter)
    assert after_first == 5  # three mermaid variants + two scripts

    manifest, diag = generate_all(scan_figures(figures), manifest, commands=commands)
    assert invocation_count(counter) == after_first, "repeated run must not invoke any generator"
    summary = next(d for d in diag.notices if d.code == "FigureSummary")
    assert summary.message == "0 regenerated, 3 cached, 0 failed"

    target = figures / "first.py"
    target.write_text(target.read_text() + "#")
    manifest, diag = generate_all(scan_figures(figures), manifest, commands=commands)
    assert invocation_count(counter) == after_first + 1
    summary = next(d for d in diag.notices if d.code == "FigureSummary")
    assert summary.message == "1 regenerated, 2 cached, 0 failed"
    _passed(5, "warm cache runs zero subprocesses; a one-byte edit regenerates exactly one asset")


# ---------------------------------------------------------------------------
# Criterion 6: two consecutive builds produce byte-identical LaTeX.

def test_criterion_6_end_to_end_idempotence(tmp_path):
    root = tmp_path / "manuscript"
    shutil.copytree(MINIMAL, root)
    started = time.monotonic()
    argv = ["build", "--manuscript-dir", str(root), "--skip", "latex_compilation", "--quiet"]
    assert cli(argv) == 0
    first = (root / "output" / "01_MAIN.tex").read_bytes()
    assert cli(argv) == 0
    second = (root / "output" / "01_MAIN.tex").read_bytes()
    elapsed = time.monotonic() - started
    assert first == second, "consecutive builds differ"
    assert elapsed < 5.0, f"two builds took {elapsed:.2f}s"
    _passed(6, f"byte-identical .tex across consecutive builds in {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# Criterion 7 (optional integration): full build with a real LaTeX engine.

@pytest.mark.skipif(shutil.which("pdflatex") is None, reason="no LaTeX engine installed")
def test_criterion_7_full_build_with_engine(tmp_path):
    root = tmp_path / "manuscript"
    shutil.copytree(MINIMAL, root)
    started = time.monotonic()
    report = build(root, BuildPlan())
    elapsed = time.monotonic() - started
    assert report.exit_code == 0, report.all_diagnostics().to_payload()
    assert (root / "output" / "01_MAIN.pdf").is_file()
    log = (root / "output" / "01_MAIN.log").read_text(encoding="utf-8", errors="replace")
    assert not re.search(r"undefined", log, re.IGNORECASE), "undefined references in engine log"
    assert elapsed < 60.0
    _passed(7, f"full engine build with a clean log in {elapsed:.1f}s")
