"""Content protection: replace verbatim-sensitive spans with opaque placeholders.

Conversion passes must never rewrite code, math, LaTeX blocks, or comments, so
those spans are swapped for placeholder tokens before any pass runs and swapped
back afterwards. Scanning precedence is fixed: code fences mask HTML comments,
which mask inline code, which masks display math, then inline math, then
top-level LaTeX blocks. A span claimed by an outer class is invisible to every
later scan.

Placeholder tokens have the shape ``⟦RXIV:kind:counter⟧``. The bracket pair
U+27E6/U+27E7 does not occur in markdown syntax; should an input contain a
token-like string anyway, the counter re-rolls until the token is absent from
the input, so restore() is byte-exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .diagnostics import Diagnostics


class ProtectionKind(str, Enum):
    code_fence = "code_fence"
    inline_code = "inline_code"
    display_math = "display_math"
    inline_math = "inline_math"
    latex_passthrough = "latex_passthrough"
    html_comment = "html_comment"


@dataclass
class Slot:
    original: str
    kind: ProtectionKind


@dataclass
class ProtectedText:
    """Document text with placeholder tokens plus the token -> span mapping."""

    text: str
    slots: dict[str, Slot]


class UnterminatedFence(Exception):
    def __init__(self, line: int):
        self.line = line
        super().__init__(f"code fence opened on line {line} is never closed")


class UnbalancedMathDelimiter(Exception):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"unbalanced math delimiter on line {line}" + (f": {detail}" if detail else ""))


class MissingPlaceholder(Exception):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"placeholder {token} missing from text; a conversion pass corrupted it")


TOKEN_RE = re.compile(r"\u27e6RXIV:([a-z_]+):(\d+)\u27e7")

# \x00 is the mask filler for already-claimed spans; every scanner below either
# excludes it from its character classes or rejects matches containing it.
_MASK = "\x00"

_FENCE_OPEN = re.compile(r"^ {0,3}(`{3,}|~{3,})(.*)$")
_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)
_BACKTICK_RUN = re.compile(r"`+")
_DISPLAY_MATH = re.compile(r"(?<![\\$\x00])\$\$(.+?)\$\$", re.DOTALL)
_INLINE_MATH = re.compile(r"(?<![\\$\x00])\$(?!\s)((?:[^$\n\x00]|\n(?!\n))+?)(?<![\s\\])\$(?!\d)")
_ENV_BEGIN = re.compile(r"\\begin\{([A-Za-z][A-Za-z*]*)\}")
_COMMAND_LINE = re.compile(r"^[ \t]*\\[A-Za-z]+(?:\[[^\]\n]*\])?(?:\{[^{}\n]*\})*[ \t]*$")
_LEFTOVER_DOLLAR = re.compile(r"(?<![\\\x00])\$")


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def find_protected_spans(
    text: str,
    *,
    strict: bool = False,
    diagnostics: Diagnostics | None = None,
) -> list[tuple[int, int, ProtectionKind]]:
    """Locate every protectable span, honouring class precedence.

    Returns (start, end, kind) triples over the original text, sorted by start.
    In lenient mode malformed spans (unterminated fence, unbalanced math) are
    reported as warnings and left unprotected; strict mode raises.
    """
    diag = diagnostics if diagnostics is not None else Diagnostics()
    spans: list[tuple[int, int, ProtectionKind]] = []
    work = text

    def claim(start: int, end: int, kind: ProtectionKind) -> None:
        nonlocal work
        spans.append((start, end, kind))
        work = work[:start] + _MASK * (end - start) + work[end:]

    _scan_fences(text, claim, strict=strict, diag=diag)
    for m in _COMMENT.finditer(work):
        if _MASK not in m.group(0):
            claim(m.start(), m.end(), ProtectionKind.html_comment)
    _scan_inline_code(work, claim)
    for m in _DISPLAY_MATH.finditer(work):
        if _MASK not in m.group(0) and "\n\n" not in m.group(1):
            claim(m.start(), m.end(), ProtectionKind.display_math)
    for m in _INLINE_MATH.finditer(work):
        claim(m.start(), m.end(), ProtectionKind.inline_math)
    _scan_latex(work, claim)

    for m in _LEFTOVER_DOLLAR.finditer(work):
        line = _line_of(text, m.start())
        if strict:
            raise UnbalancedMathDelimiter(line, "escape literal dollars as \\$")
        following = work[m.end() : m.end() + 1]
        if not following.isdigit():
            # A lone $ before a digit is treated as a currency literal.
            diag.warning("UnbalancedMathDelimiter", "unpaired $ left as literal text", line=line)

    return sorted(spans)


def _scan_fences(text: str, claim, *, strict: bool, diag: Diagnostics) -> None:
    lines = text.split("\n")
    starts: list[int] = []
    pos = 0
    for ln in lines:
        starts.append(pos)
        pos += len(ln) + 1
    i = 0
    while i < len(lines):
        m = _FENCE_OPEN.match(lines[i])
        if not m:
            i += 1
            continue
        fence = m.group(1)
        ch, count = fence[0], len(fence)
        if ch == "`" and "`" in m.group(2):
            i += 1
            continue
        closer = None
        for j in range(i + 1, len(lines)):
            stripped = lines[j].strip()
            if stripped and set(stripped) == {ch} and len(stripped) >= count:
                closer = j
                break
        if closer is None:
            if strict:
                raise UnterminatedFence(i + 1)
            diag.warning("UnterminatedFence", "code fence is never closed; left unprotected", line=i + 1)
            i += 1
            continue
        claim(starts[i], starts[closer] + len(lines[closer]), ProtectionKind.code_fence)
        i = closer + 1


def _scan_inline_code(work: str, claim) -> None:
    runs = [(m.start(), m.end()) for m in _BACKTICK_RUN.finditer(work)]
    i = 0
    while i < len(runs):
        s0, e0 = runs[i]
        length = e0 - s0
        matched = False
        for j in range(i + 1, len(runs)):
            s1, e1 = runs[j]
            if e1 - s1 != length:
                continue
            content = work[e0:s1]
            if not content or "\n\n" in content or _MASK in content:
                break
            claim(s0, e1, ProtectionKind.inline_code)
            i = j + 1
            matched = True
            break
        if not matched:
            i += 1


def _scan_latex(work: str, claim) -> None:
    pos = 0
    while True:
        m = _ENV_BEGIN.search(work, pos)
        if not m:
            break
        name = m.group(1)
        end = _find_env_end(work, name, m.end())
        if end is None:
            pos = m.end()
            continue
        if _MASK in work[m.start() : end]:
            pos = m.end()
            continue
        claim(m.start(), end, ProtectionKind.latex_passthrough)
        pos = end

    offset = 0
    for line in work.split("\n"):
        if _MASK not in line and not line.lstrip().startswith("\\begin") and _COMMAND_LINE.match(line):
            claim(offset, offset + len(line), ProtectionKind.latex_passthrough)
        offset += len(line) + 1


def _find_env_end(work: str, name: str, after: int) -> int | None:
    pattern = re.compile(r"\\(begin|end)\{" + re.escape(name) + r"\}")
    depth = 1
    for m in pattern.finditer(work, after):
        depth += 1 if m.group(1) == "begin" else -1
        if depth == 0:
            return m.end()
    return None


def protect(
    text: str,
    *,
    strict: bool = False,
    diagnostics: Diagnostics | None = None,
) -> ProtectedText:
    """Replace every protectable span with a unique placeholder token.

    Tokens are checked against the original input and re-rolled on collision,
    so no token ever matches a pre-existing substring.
    """
    spans = find_protected_spans(text, strict=strict, diagnostics=diagnostics)
    out: list[str] = []
    slots: dict[str, Slot] = {}
    counter = 1
    last = 0
    for start, end, kind in spans:
        token = f"\u27e6RXIV:{kind.value}:{counter}\u27e7"
        while token in text:
            counter += 1
            token = f"\u27e6RXIV:{kind.value}:{counter}\u27e7"
        counter += 1
        out.append(text[last:start])
        out.append(token)
        slots[token] = Slot(text[start:end], kind)
        last = end
    out.append(text[last:])
    return ProtectedText("".join(out), slots)


def restore(doc: ProtectedText) -> str:
    """Substitute every placeholder back; HTML comments become LaTeX comments."""
    for token in doc.slots:
        if token not in doc.text:
            raise MissingPlaceholder(token)

    def sub(m: re.Match) -> str:
        slot = doc.slots.get(m.group(0))
        if slot is None:
            return m.group(0)
        if slot.kind is ProtectionKind.html_comment:
            return comment_to_latex(slot.original)
        return slot.original

    return TOKEN_RE.sub(sub, doc.text)


def comment_to_latex(comment: str) -> str:
    inner = comment[4:-3] if comment.startswith("<!--") and comment.endswith("-->") else comment
    lines = inner.strip().split("\n")
    return "\n".join("% " + ln.strip() if ln.strip() else "%" for ln in lines)


def classify_math(span: str) -> ProtectionKind:
    """Classify a $-initiated span as display or inline math."""
    if not span.startswith("$"):
        raise ValueError("math span must begin with $")
    if span.startswith("$$"):
        if len(span) >= 5 and span.endswith("$$") and span[2:-2].strip():
            return ProtectionKind.display_math
        raise UnbalancedMathDelimiter(1, repr(span))
    if len(span) >= 3 and span.endswith("$") and span[1:-1].strip():
        return ProtectionKind.inline_math
    raise UnbalancedMathDelimiter(1, repr(span))
