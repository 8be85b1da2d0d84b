"""Severity-tagged diagnostic collection shared by every pipeline stage."""

from __future__ import annotations

from dataclasses import dataclass

ERROR = "error"
WARNING = "warning"
NOTICE = "notice"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    file: str | None = None
    line: int | None = None

    def format(self) -> str:
        loc = ""
        if self.file is not None:
            loc = f" [{self.file}" + (f":{self.line}" if self.line is not None else "") + "]"
        return f"{self.severity}: {self.code}: {self.message}{loc}"


class Diagnostics:
    """Ordered collection of diagnostics; iteration is stable by (file, line, code)."""

    def __init__(self) -> None:
        self._items: list[Diagnostic] = []

    def add(
        self,
        severity: str,
        code: str,
        message: str,
        *,
        file: str | None = None,
        line: int | None = None,
    ) -> None:
        self._items.append(Diagnostic(severity, code, message, file, line))

    def error(self, code: str, message: str, *, file: str | None = None, line: int | None = None) -> None:
        self.add(ERROR, code, message, file=file, line=line)

    def warning(self, code: str, message: str, *, file: str | None = None, line: int | None = None) -> None:
        self.add(WARNING, code, message, file=file, line=line)

    def notice(self, code: str, message: str, *, file: str | None = None, line: int | None = None) -> None:
        self.add(NOTICE, code, message, file=file, line=line)

    def extend(self, other: Diagnostics) -> None:
        self._items.extend(other._items)

    @property
    def items(self) -> list[Diagnostic]:
        return sorted(self._items, key=lambda d: (d.file or "", d.line or 0, d.code))

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.items if d.severity == ERROR]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.items if d.severity == WARNING]

    @property
    def notices(self) -> list[Diagnostic]:
        return [d for d in self.items if d.severity == NOTICE]

    def has_errors(self) -> bool:
        return any(d.severity == ERROR for d in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self.items)

    def __repr__(self) -> str:
        return f"Diagnostics({len(self._items)} items, {len(self.errors)} errors)"

    def to_payload(self) -> list[dict]:
        return [
            {
                "severity": d.severity,
                "code": d.code,
                "message": d.message,
                "file": d.file,
                "line": d.line,
            }
            for d in self.items
        ]
