"""Markdown-to-LaTeX conversion passes operating on protected text.

Every pass takes text that has already been through protect(): code, math,
LaTeX blocks, and comments are opaque placeholder tokens, so the regexes here
only ever see prose. convert_document() chains the passes in a fixed order and
finishes by restoring the protected spans.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .diagnostics import Diagnostics
from .protect import ProtectedText, ProtectionKind, TOKEN_RE, protect, restore
from .refs import BibEntry, CitationOccurrence, LabelIndex, convert_citations, convert_crossrefs


@dataclass
class LatexFragment:
    content: str
    required_packages: set[str] = field(default_factory=set)
    figures: list[FigureDirective] = field(default_factory=list)
    tables: list[TableDirective] = field(default_factory=list)
    citations: list[CitationOccurrence] = field(default_factory=list)


@dataclass
class FigureDirective:
    caption_markdown: str
    path: str
    label: str | None = None
    width: float = 1.0
    position: str = "t"
    span_two_columns: bool = False


@dataclass
class TableDirective:
    header_cells: list[str]
    alignment: list[str]
    rows: list[list[str]]
    caption_markdown: str | None = None
    label: str | None = None


# Emphasis stays within one line; that also keeps the * of emitted starred
# environments (\begin{table*} ...) from ever pairing up across lines.
_BOLD_ITALIC = re.compile(r"(?<!\*)\*\*\*(?!\s)([^*\n]+?)(?<!\s)\*\*\*(?!\*)")
_BOLD = re.compile(r"(?<!\*)\*\*(?!\s)((?:[^*\n]|\*(?!\*))+?)(?<![\s*])\*\*(?!\*)")
_ITALIC = re.compile(r"(?<!\*)\*(?!\s)([^*\n]+?)(?<!\s)\*(?!\*)")
_SUBSCRIPT = re.compile(r"(?<!~)~([^\s~]+)~(?!~)")
_SUPERSCRIPT = re.compile(r"(?<!\^)\^([^\s^]+)\^(?!\^)")
_HEADER = re.compile(r"^(#{1,6}) (.+)$", re.MULTILINE)
_HEADER_LABEL = re.compile(r"\s*\{#([a-z]+:[A-Za-z0-9_-]+)\}\s*$")
_LIST_ITEM = re.compile(r"^([ \t]*)(-|\d+\.)[ \t]+(.*)$")
_LINK = re.compile(r"(?<!!)\[([^\]\n]+)\]\(([^()\s]+)\)")
_BARE_URL = re.compile(r"(?<![{\w/])https?://[^\s\x00<>\u27e6\u27e7]+")
_PAGE_TAGS = {"<newpage>": "\\newpage", "<clearpage>": "\\clearpage"}
_FIGURE_LINE = re.compile(r"^!\[([^\]]*)\]\(([^()\s]+)\)[ \t]*(?:\{([^}\n]*)\})?[ \t]*$", re.MULTILINE)
_EQ_LABELED = re.compile(r"(\u27e6RXIV:display_math:\d+\u27e7)[ \t]*\{#(eq:[A-Za-z0-9_-]+)\}")
_TABLE_CAPTION = re.compile(r"^Table:\s*(.+?)\s*$")
_GENERATED_SOURCE_EXT = (".mmd", ".py", ".r")


def convert_emphasis(text: str, diagnostics: Diagnostics | None = None) -> str:
    """**x** -> \\textbf{x}, *x* -> \\textit{x}; bold resolves before italic."""
    text = _BOLD_ITALIC.sub(r"\\textbf{\\textit{\1}}", text)
    text = _BOLD.sub(r"\\textbf{\1}", text)
    text = _ITALIC.sub(r"\\textit{\1}", text)
    if diagnostics is not None and "**" in text:
        diagnostics.warning("UnpairedEmphasis", "unpaired ** marker left as literal text")
    return text


def convert_subsuperscript(text: str) -> str:
    """~x~ -> \\textsubscript{x}, ^x^ -> \\textsuperscript{x}; x must be solid."""
    text = _SUBSCRIPT.sub(r"\\textsubscript{\1}", text)
    text = _SUPERSCRIPT.sub(r"\\textsuperscript{\1}", text)
    return text


def convert_headers(text: str, diagnostics: Diagnostics | None = None) -> str:
    """ATX headers (space required) to section commands; {#kind:id} becomes a label."""
    commands = {1: "section", 2: "subsection", 3: "subsubsection"}

    def repl(m: re.Match) -> str:
        level = len(m.group(1))
        title = m.group(2).strip()
        label = None
        lm = _HEADER_LABEL.search(title)
        if lm:
            label = lm.group(1)
            title = title[: lm.start()].rstrip()
        command = commands.get(level)
        if command is None:
            command = "paragraph"
            if diagnostics is not None:
                diagnostics.warning("HeaderDepth", f"header level {level} deeper than 3; using \\paragraph")
        out = f"\\{command}{{{title}}}"
        if label:
            out += f"\\label{{{label}}}"
        return out

    return _HEADER.sub(repl, text)


def convert_lists(text: str) -> str:
    """Group consecutive list lines into itemize/enumerate; 2-space steps nest."""
    lines = text.split("\n")
    out: list[str] = []
    i = 0
    while i < len(lines):
        if not _LIST_ITEM.match(lines[i]):
            out.append(lines[i])
            i += 1
            continue
        block: list[tuple[int, str, str]] = []
        while i < len(lines):
            m = _LIST_ITEM.match(lines[i])
            if not m:
                break
            indent = len(m.group(1).replace("\t", "    "))
            env = "enumerate" if m.group(2)[0].isdigit() else "itemize"
            block.append((indent // 2, env, m.group(3)))
            i += 1
        out.extend(_emit_list(block))
    return "\n".join(out)


def _emit_list(items: list[tuple[int, str, str]]) -> list[str]:
    lines: list[str] = []
    stack: list[str] = []
    for level, env, text in items:
        target = min(level + 1, len(stack) + 1)
        while len(stack) > target:
            lines.append(f"\\end{{{stack.pop()}}}")
        if len(stack) == target and stack[-1] != env:
            lines.append(f"\\end{{{stack.pop()}}}")
        while len(stack) < target:
            stack.append(env)
            lines.append(f"\\begin{{{env}}}")
        lines.append(f"\\item {text}")
    while stack:
        lines.append(f"\\end{{{stack.pop()}}}")
    return lines


def convert_links(text: str) -> str:
    """[text](url) -> \\href{url}{text}; bare http(s) URLs -> \\url{...}."""
    text = _LINK.sub(r"\\href{\2}{\1}", text)

    def url_repl(m: re.Match) -> str:
        url = m.group(0)
        trailing = ""
        while url and url[-1] in ".,;:!?'\"":
            trailing = url[-1] + trailing
            url = url[:-1]
        while url.endswith(")") and url.count(")") > url.count("("):
            trailing = ")" + trailing
            url = url[:-1]
        return f"\\url{{{url}}}{trailing}"

    return _BARE_URL.sub(url_repl, text)


def convert_page_controls(text: str) -> str:
    for tag, command in _PAGE_TAGS.items():
        text = text.replace(tag, command)
    return text


def convert_equation_blocks(doc: ProtectedText, diagnostics: Diagnostics | None = None) -> ProtectedText:
    """Display math followed by {#eq:id} becomes a numbered equation environment.

    The rewrite happens inside the protected slot so the math body stays opaque
    to later passes; unlabeled display math is restored verbatim.
    """
    diag = diagnostics if diagnostics is not None else Diagnostics()
    seen: set[str] = set()

    def repl(m: re.Match) -> str:
        token, label = m.group(1), m.group(2)
        slot = doc.slots.get(token)
        if slot is None:
            return m.group(0)
        if label in seen:
            diag.error("DuplicateLabel", f"equation label '{label}' defined more than once")
            return token
        seen.add(label)
        body = slot.original[2:-2].strip()
        slot.original = f"\\begin{{equation}}\n{body}\n\\label{{{label}}}\n\\end{{equation}}"
        slot.kind = ProtectionKind.latex_passthrough
        return token

    doc.text = _EQ_LABELED.sub(repl, doc.text)
    return doc


def _parse_figure_attrs(
    attrs: str | None,
    diagnostics: Diagnostics,
    *,
    line: int | None = None,
    file: str | None = None,
) -> dict:
    parsed: dict = {"label": None, "width": 1.0, "position": "t", "span": False}
    if not attrs:
        return parsed
    for token in attrs.split():
        if token.startswith("#"):
            if re.fullmatch(r"#s?fig:[A-Za-z0-9_-]+", token):
                parsed["label"] = token[1:]
            else:
                diagnostics.error("MalformedAttributes", f"bad figure label {token!r}", file=file, line=line)
        elif token.startswith("width="):
            try:
                width = float(token[6:])
            except ValueError:
                width = -1.0
            if 0 < width <= 1.0:
                parsed["width"] = width
            else:
                diagnostics.error("MalformedAttributes", f"width out of range in {token!r}", file=file, line=line)
        elif token.startswith("position="):
            value = token[9:]
            if re.fullmatch(r"[htbpH!]+", value):
                parsed["position"] = value
            else:
                diagnostics.error("MalformedAttributes", f"bad float position {token!r}", file=file, line=line)
        elif token == "span=2col":
            parsed["span"] = True
        else:
            diagnostics.warning("MalformedAttributes", f"unknown figure attribute {token!r}", file=file, line=line)
    return parsed


def convert_figures(
    text: str,
    diagnostics: Diagnostics | None = None,
    *,
    strict: bool = False,
    file: str | None = None,
) -> tuple[str, list[FigureDirective]]:
    """Image paragraphs become figure environments; sfig: labels go supplementary.

    Generator-source references (.mmd/.py/.R) are rewritten to the PDF variant
    the LaTeX engine will consume; .tex/.tikz paths are \\input rather than
    \\includegraphics.
    """
    diag = diagnostics if diagnostics is not None else Diagnostics()
    directives: list[FigureDirective] = []

    def repl(m: re.Match) -> str:
        caption, path, attrs = m.group(1), m.group(2), m.group(3)
        line = text.count("\n", 0, m.start()) + 1
        parsed = _parse_figure_attrs(attrs, diag, line=line, file=file)
        label = parsed["label"]
        if label is None and strict:
            diag.warning("UnlabeledFigure", f"figure '{path}' has no {{#fig:...}} label", file=file, line=line)
        lower = path.lower()
        is_tikz = lower.endswith((".tex", ".tikz"))
        if lower.endswith(_GENERATED_SOURCE_EXT):
            path_out = re.sub(r"\.[A-Za-z]+$", ".pdf", path)
        else:
            path_out = path
        directive = FigureDirective(
            caption_markdown=caption,
            path=path_out,
            label=label,
            width=parsed["width"],
            position=parsed["position"],
            span_two_columns=parsed["span"],
        )
        directives.append(directive)
        if label is not None and label.startswith("sfig:"):
            env = "sfigure"
        elif parsed["span"]:
            env = "figure*"
        else:
            env = "figure"
        include = (
            f"\\input{{{path_out}}}"
            if is_tikz
            else f"\\includegraphics[width={directive.width}\\linewidth]{{{path_out}}}"
        )
        lines = [
            f"\\begin{{{env}}}[{directive.position}]",
            "\\centering",
            include,
            f"\\caption{{{caption}}}",
        ]
        if label is not None:
            lines.append(f"\\label{{{label}}}")
        lines.append(f"\\end{{{env}}}")
        return "\n".join(lines)

    return _FIGURE_LINE.sub(repl, text), directives


def _is_table_row(line: str) -> bool:
    stripped = line.strip()
    return stripped.startswith("|") and len(stripped) > 1


def _split_row(line: str) -> list[str]:
    stripped = line.strip().strip("|")
    return [cell.strip() for cell in stripped.split("|")]


_SEPARATOR_CELL = re.compile(r"^:?-+:?$")


def _separator_alignment(line: str) -> list[str] | None:
    cells = _split_row(line)
    if not cells or not all(_SEPARATOR_CELL.match(c) for c in cells):
        return None
    aligns = []
    for c in cells:
        if c.startswith(":") and c.endswith(":"):
            aligns.append("center")
        elif c.endswith(":"):
            aligns.append("right")
        else:
            aligns.append("left")
    return aligns


def _convert_cell(cell: str) -> str:
    # Cells are fully converted and escaped here because the final escape pass
    # skips tabular bodies (the & separators are structural).
    cell = convert_links(cell)
    cell = convert_emphasis(cell)
    cell = convert_subsuperscript(cell)
    return escape_prose(cell)


def convert_tables(
    text: str,
    diagnostics: Diagnostics | None = None,
    *,
    file: str | None = None,
) -> tuple[str, list[TableDirective]]:
    """GitHub pipe tables become table/tabular environments.

    A following "Table: caption {#table:id}" line attaches caption and label;
    a stable: label selects the full-width starred environment.
    """
    diag = diagnostics if diagnostics is not None else Diagnostics()
    directives: list[TableDirective] = []
    lines = text.split("\n")
    out: list[str] = []
    i = 0
    while i < len(lines):
        if not (_is_table_row(lines[i]) and i + 1 < len(lines)):
            out.append(lines[i])
            i += 1
            continue
        alignment = _separator_alignment(lines[i + 1])
        if alignment is None or len(alignment) != len(_split_row(lines[i])):
            out.append(lines[i])
            i += 1
            continue
        header = _split_row(lines[i])
        start_line = i + 1
        i += 2
        rows: list[list[str]] = []
        ragged: int | None = None
        while i < len(lines) and _is_table_row(lines[i]):
            row = _split_row(lines[i])
            if len(row) != len(header):
                ragged = i + 1
                break
            rows.append(row)
            i += 1
        if ragged is not None:
            diag.error(
                "RaggedRow",
                f"table row has {len(_split_row(lines[ragged - 1]))} cells, header has {len(header)}",
                file=file,
                line=ragged,
            )
            out.extend(lines[start_line - 1 : ragged])
            i = ragged
            continue
        caption = None
        label = None
        j = i
        while j < len(lines) and not lines[j].strip():
            j += 1
        if j < len(lines):
            cm = _TABLE_CAPTION.match(lines[j])
            if cm:
                caption = cm.group(1)
                lm = re.search(r"\s*\{#(s?table:[A-Za-z0-9_-]+)\}\s*$", caption)
                if lm:
                    label = lm.group(1)
                    caption = caption[: lm.start()].rstrip()
                i = j + 1
        directives.append(
            TableDirective(
                header_cells=header,
                alignment=alignment,
                rows=rows,
                caption_markdown=caption,
                label=label,
            )
        )
        env = "table*" if label is not None and label.startswith("stable:") else "table"
        colspec = "".join(a[0] for a in alignment)
        block = [f"\\begin{{{env}}}[t]", "\\centering", f"\\begin{{tabular}}{{{colspec}}}", "\\hline"]
        block.append(" & ".join(_convert_cell(c) for c in header) + " \\\\")
        block.append("\\hline")
        for row in rows:
            block.append(" & ".join(_convert_cell(c) for c in row) + " \\\\")
        block.append("\\hline")
        block.append("\\end{tabular}")
        if caption is not None:
            block.append(f"\\caption{{{caption}}}")
        if label is not None:
            block.append(f"\\label{{{label}}}")
        block.append(f"\\end{{{env}}}")
        out.extend(block)
    return "\n".join(out), directives


# Commands whose brace arguments must stay verbatim (keys, labels, URLs, paths).
_ESCAPE_SKIP = [
    TOKEN_RE,
    re.compile(r"\\(?:cite|ref|eqref|label|pageref|url|input|bibliography|bibliographystyle)\{[^{}]*\}"),
    re.compile(r"\\includegraphics(?:\[[^\]]*\])?\{[^{}]*\}"),
    re.compile(r"\\(?:begin|end)\{[^{}]*\}(?:\[[^\]]*\])?"),
    re.compile(r"\\href\{[^{}]*\}"),
    re.compile(r"\\verb(.)(?:(?!\1).)*\1"),
    re.compile(r"\\begin\{tabular\}.*?\\end\{tabular\}", re.DOTALL),
    re.compile(r"\\begin\{verbatim\}.*?\\end\{verbatim\}", re.DOTALL),
]
_ESCAPE_CHAR = re.compile(r"(?<!\\)([%&#_$])")


def escape_prose(text: str, *, degree_fallback: bool = False) -> str:
    """Escape LaTeX-special characters in prose, leaving commands and tokens alone.

    Escapes % & # _ and stray literal $; the degree sign passes through for
    Unicode-capable engines unless degree_fallback asks for \\textdegree.
    """
    intervals: list[tuple[int, int]] = []
    for pattern in _ESCAPE_SKIP:
        for m in pattern.finditer(text):
            intervals.append((m.start(), m.end()))
    intervals.sort()
    merged: list[tuple[int, int]] = []
    for start, end in intervals:
        if merged and start < merged[-1][1]:
            merged[-1] = (merged[-1][0], max(end, merged[-1][1]))
        else:
            merged.append((start, end))

    def escape_segment(segment: str) -> str:
        segment = _ESCAPE_CHAR.sub(r"\\\1", segment)
        if degree_fallback:
            segment = segment.replace("\u00b0", "\\textdegree{}")
        return segment

    out: list[str] = []
    last = 0
    for start, end in merged:
        out.append(escape_segment(text[last:start]))
        out.append(text[start:end])
        last = end
    out.append(escape_segment(text[last:]))
    return "".join(out)


_VERB_DELIMS = "|!\"'=+/:;"


def _latex_escape_all(text: str) -> str:
    replacements = {
        "\\": "\\textbackslash{}",
        "{": "\\{",
        "}": "\\}",
        "%": "\\%",
        "&": "\\&",
        "#": "\\#",
        "_": "\\_",
        "$": "\\$",
        "^": "\\textasciicircum{}",
        "~": "\\textasciitilde{}",
    }
    return "".join(replacements.get(ch, ch) for ch in text)


def convert_code_slots(doc: ProtectedText) -> ProtectedText:
    """Rewrite code slots to LaTeX form: fences -> verbatim, inline -> \\verb."""
    for slot in doc.slots.values():
        if slot.kind is ProtectionKind.code_fence:
            first_nl = slot.original.find("\n")
            last_nl = slot.original.rfind("\n")
            body = slot.original[first_nl + 1 : last_nl + 1] if 0 <= first_nl < last_nl else ""
            slot.original = "\\begin{verbatim}\n" + body + "\\end{verbatim}"
            slot.kind = ProtectionKind.latex_passthrough
        elif slot.kind is ProtectionKind.inline_code:
            m = re.match(r"^(`+)(.*)\1$", slot.original, re.DOTALL)
            inner = m.group(2) if m else slot.original
            if len(inner) >= 3 and inner[0] == " " and inner[-1] == " " and inner.strip():
                inner = inner[1:-1]
            delim = next((d for d in _VERB_DELIMS if d not in inner), None)
            if delim is None or "\n" in inner:
                slot.original = "\\texttt{" + _latex_escape_all(inner.replace("\n", " ")) + "}"
            else:
                slot.original = f"\\verb{delim}{inner}{delim}"
            slot.kind = ProtectionKind.latex_passthrough
    return doc


def _infer_packages(content: str) -> set[str]:
    packages: set[str] = set()
    if "\\href{" in content or "\\url{" in content:
        packages.add("hyperref")
    if "\\includegraphics" in content:
        packages.add("graphicx")
    if "\\begin{equation}" in content or "\\eqref{" in content:
        packages.add("amsmath")
    if "\\textdegree" in content:
        packages.add("textcomp")
    return packages


def convert_document(
    source: str,
    index: LabelIndex,
    bib: list[BibEntry],
    *,
    strict: bool = False,
    file: str | None = None,
) -> tuple[LatexFragment, Diagnostics]:
    """Run the full fixed-order conversion pipeline on one markdown document."""
    diag = Diagnostics()
    doc = protect(source, strict=False, diagnostics=diag)
    if strict:
        hard = [d for d in diag.items if d.code in ("UnterminatedFence", "UnbalancedMathDelimiter")]
        for d in hard:
            diag.error(d.code, d.message, file=file or d.file, line=d.line)

    convert_equation_blocks(doc, diag)
    text, xref_occurrences = convert_crossrefs(doc.text, index, diag, strict=strict, file=file)
    text, cite_occurrences = convert_citations(text, bib, diag, strict=strict, file=file)
    text, figures = convert_figures(text, diag, strict=strict, file=file)
    text, tables = convert_tables(text, diag, file=file)
    text = convert_headers(text, diag)
    text = convert_lists(text)
    text = convert_links(text)
    text = convert_emphasis(text, diag)
    text = convert_subsuperscript(text)
    text = convert_page_controls(text)
    text = escape_prose(text)
    doc.text = text
    convert_code_slots(doc)
    content = restore(doc)

    fragment = LatexFragment(
        content=content,
        required_packages=_infer_packages(content),
        figures=figures,
        tables=tables,
        citations=xref_occurrences + cite_occurrences,
    )
    return fragment, diag
