"""Bibliography parsing, citation/cross-reference conversion, and validation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import Diagnostics
from .protect import find_protected_spans

LABEL_KINDS = ("fig", "sfig", "table", "stable", "eq", "snote")

_KEY_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_:.+-]*$")
_KIND_LIKE = re.compile(r"^[a-z]+:")
_SINGLE_CITE = re.compile(r"(?<![\w@])@([A-Za-z0-9][A-Za-z0-9_:.+-]*)")
_CITE_GROUP = re.compile(r"\[\s*@[^\[\]\n]*\]")
_GROUP_ITEM = re.compile(r"^@([A-Za-z0-9][A-Za-z0-9_:.+-]*)$")
_CROSSREF = re.compile(r"(?<![\w@])@([a-z]+):([A-Za-z0-9_-]+)")
_LABEL_ATTR = re.compile(
    r"\{#((" + "|".join(LABEL_KINDS) + r"):[A-Za-z0-9_-]+)(?:[ \t][^{}]*)?\}"
)


@dataclass
class BibEntry:
    key: str
    entry_type: str
    fields: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CitationOccurrence:
    key: str
    byte_span: tuple[int, int]
    grouped: bool = False


class LabelIndex:
    """All defined {#kind:id} labels, mapping full label -> kind."""

    def __init__(self, labels: dict[str, str] | None = None):
        self.labels: dict[str, str] = {}
        for label, kind in (labels or {}).items():
            if kind not in LABEL_KINDS or not label.startswith(kind + ":"):
                raise ValueError(f"malformed label entry {label!r} -> {kind!r}")
            if label in self.labels:
                raise ValueError(f"duplicate label {label!r}")
            self.labels[label] = kind

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.labels)

    def kind_of(self, label: str) -> str | None:
        return self.labels.get(label)


def parse_bibtex(source: str, *, strict: bool = False) -> tuple[list[BibEntry], Diagnostics]:
    """Parse @type{key, field = value, ...} blocks; lenient mode never aborts."""
    diag = Diagnostics()
    entries: list[BibEntry] = []
    seen: set[str] = set()
    severity = diag.error if strict else diag.warning
    i = 0
    n = len(source)
    while i < n:
        at = source.find("@", i)
        if at == -1:
            break
        m = re.match(r"@\s*([A-Za-z]+)\s*", source[at:])
        if not m:
            i = at + 1
            continue
        entry_type = m.group(1).lower()
        body_open = at + m.end()
        if body_open >= n or source[body_open] != "{":
            severity("MalformedEntry", f"@{entry_type} block without braces", line=_line(source, at))
            i = at + 1
            continue
        end = _balanced_end(source, body_open)
        if end is None:
            severity("MalformedEntry", f"@{entry_type} block never closes", line=_line(source, at))
            break
        body = source[body_open + 1 : end - 1]
        i = end
        if entry_type in ("comment", "preamble"):
            continue
        if entry_type == "string":
            diag.warning("UnsupportedStringMacro", "@string macros are not expanded", line=_line(source, at))
            continue
        comma = body.find(",")
        key = (body if comma == -1 else body[:comma]).strip()
        if not _KEY_PATTERN.match(key):
            severity("MalformedEntry", f"invalid citation key {key!r}", line=_line(source, at))
            continue
        if key in seen:
            diag.add(
                "error" if strict else "warning",
                "DuplicateKey",
                f"duplicate bibliography key '{key}'",
                line=_line(source, at),
            )
            continue
        seen.add(key)
        fields = _parse_fields(body[comma + 1 :]) if comma != -1 else {}
        entries.append(BibEntry(key=key, entry_type=entry_type, fields=fields))
    return entries, diag


def _line(source: str, offset: int) -> int:
    return source.count("\n", 0, offset) + 1


def _balanced_end(source: str, open_brace: int) -> int | None:
    depth = 0
    i = open_brace
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return None


def _parse_fields(body: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    i = 0
    n = len(body)
    name_re = re.compile(r"\s*([A-Za-z][\w-]*)\s*=\s*")
    while i < n:
        m = name_re.match(body, i)
        if not m:
            nxt = body.find(",", i)
            if nxt == -1:
                break
            i = nxt + 1
            continue
        name = m.group(1).lower()
        i = m.end()
        if i >= n:
            break
        if body[i] == "{":
            end = _balanced_end(body, i)
            if end is None:
                break
            fields[name] = body[i + 1 : end - 1]
            i = end
        elif body[i] == '"':
            end = body.find('"', i + 1)
            if end == -1:
                break
            fields[name] = body[i + 1 : end]
            i = end + 1
        else:
            m2 = re.match(r"[^,]*", body[i:])
            fields[name] = m2.group(0).strip()
            i += m2.end()
        nxt = body.find(",", i)
        if nxt == -1:
            break
        i = nxt + 1
    return fields


def load_bibliography(path: Path, *, strict: bool = False) -> tuple[list[BibEntry], Diagnostics]:
    """Read a .bib file as UTF-8, falling back to Latin-1 with a warning."""
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
        prelude = Diagnostics()
    except UnicodeDecodeError:
        text = raw.decode("latin-1")
        prelude = Diagnostics()
        prelude.warning("BibEncoding", f"{path} is not valid UTF-8; decoded as Latin-1", file=str(path))
    entries, diag = parse_bibtex(text, strict=strict)
    prelude.extend(diag)
    return entries, prelude


def _splice(text: str, replacements: list[tuple[int, int, str]]) -> str:
    out: list[str] = []
    last = 0
    for start, end, new in sorted(replacements):
        out.append(text[last:start])
        out.append(new)
        last = end
    out.append(text[last:])
    return "".join(out)


def convert_crossrefs(
    text: str,
    index: LabelIndex,
    diagnostics: Diagnostics | None = None,
    *,
    strict: bool = False,
    file: str | None = None,
) -> tuple[str, list[CitationOccurrence]]:
    """@kind:id -> \\ref{kind:id} (\\eqref for eq:); unknown kinds are left alone."""
    diag = diagnostics if diagnostics is not None else Diagnostics()
    replacements: list[tuple[int, int, str]] = []
    occurrences: list[CitationOccurrence] = []
    for m in _CROSSREF.finditer(text):
        kind = m.group(1)
        label = f"{kind}:{m.group(2)}"
        if kind not in LABEL_KINDS:
            diag.warning(
                "UnknownReferenceKind",
                f"@{kind}: is not a cross-reference kind; left unchanged",
                file=file,
                line=_line(text, m.start()),
            )
            continue
        command = "eqref" if kind == "eq" else "ref"
        replacements.append((m.start(), m.end(), f"\\{command}{{{label}}}"))
        occurrences.append(CitationOccurrence(key=label, byte_span=(m.start(), m.end())))
        if label not in index:
            diag.add(
                "error" if strict else "warning",
                "UndefinedReference",
                f"reference to undefined label '{label}'",
                file=file,
                line=_line(text, m.start()),
            )
    return _splice(text, replacements), occurrences


def convert_citations(
    text: str,
    bib: list[BibEntry],
    diagnostics: Diagnostics | None = None,
    *,
    strict: bool = False,
    file: str | None = None,
) -> tuple[str, list[CitationOccurrence]]:
    """@key -> \\cite{key}; [@a;@b] -> \\cite{a,b}; emails and @kind: tokens survive."""
    diag = diagnostics if diagnostics is not None else Diagnostics()
    known = {entry.key for entry in bib}
    replacements: list[tuple[int, int, str]] = []
    occurrences: list[CitationOccurrence] = []
    group_spans: list[tuple[int, int]] = []

    for m in _CITE_GROUP.finditer(text):
        inner = m.group(0)[1:-1]
        keys: list[tuple[str, int]] = []
        offset = 1
        ok = True
        for part in inner.split(";"):
            stripped = part.strip()
            km = _GROUP_ITEM.match(stripped)
            if not km or _KIND_LIKE.match(km.group(1)):
                ok = False
                break
            keys.append((km.group(1), m.start() + offset + part.index("@")))
            offset += len(part) + 1
        if not ok or not keys:
            continue
        group_spans.append((m.start(), m.end()))
        replacements.append((m.start(), m.end(), "\\cite{" + ",".join(k for k, _ in keys) + "}"))
        for key, start in keys:
            occurrences.append(
                CitationOccurrence(key=key, byte_span=(start, start + 1 + len(key)), grouped=True)
            )

    for m in _SINGLE_CITE.finditer(text):
        if any(gs <= m.start() < ge for gs, ge in group_spans):
            continue
        key = m.group(1).rstrip(".,:")
        if not key or _KIND_LIKE.match(key):
            continue
        end = m.start() + 1 + len(key)
        replacements.append((m.start(), end, f"\\cite{{{key}}}"))
        occurrences.append(CitationOccurrence(key=key, byte_span=(m.start(), end)))

    for occ in occurrences:
        if occ.key not in known:
            diag.add(
                "error" if strict else "warning",
                "UnknownCitation",
                f"citation key '{occ.key}' not found in bibliography",
                file=file,
                line=_line(text, occ.byte_span[0]),
            )
    return _splice(text, replacements), occurrences


def build_label_index(
    documents: list[str],
    names: list[str] | None = None,
) -> tuple[LabelIndex, Diagnostics]:
    """Collect every {#kind:id} attribute outside protected spans."""
    diag = Diagnostics()
    labels: dict[str, str] = {}
    first_seen: dict[str, tuple[str, int]] = {}
    for idx, doc in enumerate(documents):
        name = names[idx] if names else f"document {idx + 1}"
        spans = find_protected_spans(doc)
        for m in _LABEL_ATTR.finditer(doc):
            if any(s <= m.start() < e for s, e, _ in spans):
                continue
            label, kind = m.group(1), m.group(2)
            line = _line(doc, m.start())
            if label in labels:
                prev_name, prev_line = first_seen[label]
                diag.error(
                    "DuplicateLabel",
                    f"label '{label}' defined at {prev_name}:{prev_line} and again at {name}:{line}",
                    file=name,
                    line=line,
                )
                continue
            labels[label] = kind
            first_seen[label] = (name, line)
    return LabelIndex(labels), diag


_LABEL_KEY = re.compile(r"^(" + "|".join(LABEL_KINDS) + r"):")


def validate_references(
    occurrences: list[CitationOccurrence],
    index: LabelIndex,
    bib: list[BibEntry],
) -> Diagnostics:
    """Report unknown citations, undefined labels, and unused bibliography entries.

    One error per distinct missing key or label; unused entries are notices.
    """
    diag = Diagnostics()
    known = {entry.key for entry in bib}
    cited: set[str] = set()
    missing_labels: set[str] = set()
    missing_keys: set[str] = set()
    for occ in occurrences:
        if _LABEL_KEY.match(occ.key):
            if occ.key not in index and occ.key not in missing_labels:
                missing_labels.add(occ.key)
                diag.error("UndefinedReference", f"reference to undefined label '{occ.key}'")
        else:
            cited.add(occ.key)
            if occ.key not in known and occ.key not in missing_keys:
                missing_keys.add(occ.key)
                diag.error("UnknownCitation", f"citation key '{occ.key}' not found in bibliography")
    for key in sorted(known - cited):
        diag.notice("UnusedBibEntry", f"bibliography entry '{key}' is never cited")
    return diag
