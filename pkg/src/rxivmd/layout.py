"""Manuscript directory discovery and YAML configuration parsing.

Conventional file names are fixed: 00_CONFIG.yml, 01_MAIN.md, optional
02_SUPPLEMENTARY.md, 03_REFERENCES.bib, FIGURES/, output/. Paths in the
configuration resolve relative to the manuscript root, never the working
directory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .diagnostics import Diagnostics

CONFIG_NAME = "00_CONFIG.yml"
MAIN_NAME = "01_MAIN.md"
SUPPLEMENTARY_NAME = "02_SUPPLEMENTARY.md"
BIBLIOGRAPHY_NAME = "03_REFERENCES.bib"
FIGURES_NAME = "FIGURES"
OUTPUT_NAME = "output"

_ORCID = re.compile(r"^\d{4}-\d{4}-\d{4}-\d{3}[\dX]$")


class MissingFile(Exception):
    def __init__(self, role: str, path: Path):
        self.role = role
        self.path = path
        super().__init__(f"required manuscript file missing: {role} expected at {path}")


class YamlSyntax(Exception):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"YAML syntax error at line {line}: {message}")


class SchemaViolation(Exception):
    def __init__(self, field_name: str, reason: str):
        self.field = field_name
        self.reason = reason
        super().__init__(f"config field '{field_name}': {reason}")


@dataclass(frozen=True)
class ManuscriptLayout:
    root_dir: Path
    main_md: Path
    config_yaml: Path
    bibliography_bib: Path
    figures_dir: Path
    output_dir: Path
    supplementary_md: Path | None = None

    def with_output_dir(self, output_dir: Path) -> ManuscriptLayout:
        resolved = Path(output_dir)
        sources = [self.root_dir, self.main_md, self.config_yaml, self.bibliography_bib, self.figures_dir]
        if self.supplementary_md is not None:
            sources.append(self.supplementary_md)
        if resolved.resolve() in {p.resolve() for p in sources}:
            raise ValueError(f"output directory {resolved} would overwrite manuscript sources")
        return replace(self, output_dir=resolved)


@dataclass(frozen=True)
class Affiliation:
    name: str


@dataclass(frozen=True)
class Author:
    name: str
    affiliation_indices: tuple[int, ...] = ()
    corresponding: bool = False
    orcid: str | None = None


@dataclass(frozen=True)
class GeneratorCommands:
    mermaid: str = "mmdc"
    python: str = "python3"
    r: str = "Rscript"


@dataclass(frozen=True)
class ManuscriptConfig:
    title: str
    short_title: str | None = None
    authors: tuple[Author, ...] = ()
    affiliations: tuple[Affiliation, ...] = ()
    keywords: tuple[str, ...] = ()
    bibliography: str = BIBLIOGRAPHY_NAME
    latex_engine: str = "pdflatex"
    strict: bool = False
    generators: GeneratorCommands = GeneratorCommands()
    extra: tuple[tuple[str, object], ...] = ()


def discover_layout(root_dir: Path | str) -> ManuscriptLayout:
    """Resolve the conventional manuscript layout under root_dir.

    Deterministic and read-only; raises MissingFile for any absent required
    entry (main document, config, bibliography).
    """
    root = Path(root_dir).resolve()
    if not root.is_dir():
        raise MissingFile("root_dir", root)
    main_md = root / MAIN_NAME
    config_yaml = root / CONFIG_NAME
    bibliography = root / BIBLIOGRAPHY_NAME
    if not main_md.is_file():
        raise MissingFile("main_md", main_md)
    if not config_yaml.is_file():
        raise MissingFile("config_yaml", config_yaml)
    if not bibliography.is_file():
        raise MissingFile("bibliography", bibliography)
    supplementary = root / SUPPLEMENTARY_NAME
    return ManuscriptLayout(
        root_dir=root,
        main_md=main_md,
        config_yaml=config_yaml,
        bibliography_bib=bibliography,
        figures_dir=root / FIGURES_NAME,
        output_dir=root / OUTPUT_NAME,
        supplementary_md=supplementary if supplementary.is_file() else None,
    )


_KNOWN_KEYS = {
    "title",
    "short_title",
    "authors",
    "affiliations",
    "keywords",
    "bibliography",
    "latex_engine",
    "strict",
    "generators",
}


def parse_config(
    config_yaml: Path | str,
    *,
    strict: bool = False,
    diagnostics: Diagnostics | None = None,
) -> ManuscriptConfig:
    """Parse and validate the manuscript configuration file."""
    path = Path(config_yaml)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise YamlSyntax(0, f"file is not valid UTF-8: {exc}") from exc
    return parse_config_text(text, strict=strict, diagnostics=diagnostics)


def parse_config_text(
    text: str,
    *,
    strict: bool = False,
    diagnostics: Diagnostics | None = None,
) -> ManuscriptConfig:
    diag = diagnostics if diagnostics is not None else Diagnostics()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise YamlSyntax(line, str(getattr(exc, "problem", exc))) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SchemaViolation("<root>", "configuration must be a YAML mapping")

    unknown = sorted(set(data) - _KNOWN_KEYS)
    for key in unknown:
        if strict:
            raise SchemaViolation(key, "unknown configuration key")
        diag.warning("UnknownConfigKey", f"unknown configuration key '{key}' ignored")

    title = data.get("title")
    if not isinstance(title, str) or not title.strip():
        raise SchemaViolation("title", "title must be a non-empty string")

    affiliations = _parse_affiliations(data.get("affiliations", []))
    authors = _parse_authors(data.get("authors", []), len(affiliations))

    keywords = data.get("keywords", [])
    if not isinstance(keywords, list) or not all(isinstance(k, str) for k in keywords):
        raise SchemaViolation("keywords", "keywords must be a list of strings")

    bibliography = data.get("bibliography", BIBLIOGRAPHY_NAME)
    if not isinstance(bibliography, str) or not bibliography:
        raise SchemaViolation("bibliography", "bibliography must be a path string")

    latex_engine = data.get("latex_engine", "pdflatex")
    if not isinstance(latex_engine, str) or not latex_engine:
        raise SchemaViolation("latex_engine", "latex_engine must be a command name")

    strict_flag = data.get("strict", False)
    if not isinstance(strict_flag, bool):
        raise SchemaViolation("strict", "strict must be a boolean")

    short_title = data.get("short_title")
    if short_title is not None and not isinstance(short_title, str):
        raise SchemaViolation("short_title", "short_title must be a string")

    generators = _parse_generators(data.get("generators", {}))

    return ManuscriptConfig(
        title=title.strip(),
        short_title=short_title,
        authors=authors,
        affiliations=affiliations,
        keywords=tuple(keywords),
        bibliography=bibliography,
        latex_engine=latex_engine,
        strict=strict_flag,
        generators=generators,
        extra=tuple(sorted((k, data[k]) for k in unknown)),
    )


def _parse_affiliations(raw: object) -> tuple[Affiliation, ...]:
    if not isinstance(raw, list):
        raise SchemaViolation("affiliations", "affiliations must be a list")
    out = []
    for idx, item in enumerate(raw, start=1):
        if isinstance(item, str):
            out.append(Affiliation(name=item))
        elif isinstance(item, dict) and isinstance(item.get("name"), str):
            out.append(Affiliation(name=item["name"]))
        else:
            raise SchemaViolation(f"affiliations[{idx}]", "each affiliation needs a name string")
    return tuple(out)


def _parse_authors(raw: object, affiliation_count: int) -> tuple[Author, ...]:
    if not isinstance(raw, list):
        raise SchemaViolation("authors", "authors must be a list")
    out = []
    for idx, item in enumerate(raw, start=1):
        where = f"authors[{idx}]"
        if not isinstance(item, dict) or not isinstance(item.get("name"), str):
            raise SchemaViolation(where, "each author needs a name string")
        indices = item.get("affiliations", [])
        if isinstance(indices, int):
            indices = [indices]
        if not isinstance(indices, list) or not all(isinstance(i, int) and i > 0 for i in indices):
            raise SchemaViolation(where, "affiliations must be positive 1-based indices")
        for i in indices:
            if i > affiliation_count:
                raise SchemaViolation(where, f"affiliation index {i} exceeds the {affiliation_count} defined")
        orcid = item.get("orcid")
        if orcid is not None:
            if not isinstance(orcid, str) or not _ORCID.match(orcid):
                raise SchemaViolation(where, f"ORCID {orcid!r} does not match dddd-dddd-dddd-dddX")
        corresponding = item.get("corresponding", False)
        if not isinstance(corresponding, bool):
            raise SchemaViolation(where, "corresponding must be a boolean")
        out.append(
            Author(
                name=item["name"],
                affiliation_indices=tuple(indices),
                corresponding=corresponding,
                orcid=orcid,
            )
        )
    return tuple(out)


def _parse_generators(raw: object) -> GeneratorCommands:
    if not isinstance(raw, dict):
        raise SchemaViolation("generators", "generators must be a mapping")
    commands = {}
    for key in ("mermaid", "python", "r"):
        value = raw.get(key)
        if value is not None:
            if not isinstance(value, str) or not value:
                raise SchemaViolation(f"generators.{key}", "command must be a non-empty string")
            commands[key] = value
    return GeneratorCommands(**commands)


def serialize_config(config: ManuscriptConfig) -> str:
    """Emit the schema subset of a config as YAML; inverse of parse_config_text."""
    data: dict = {"title": config.title}
    if config.short_title is not None:
        data["short_title"] = config.short_title
    if config.authors:
        data["authors"] = [
            {
                "name": a.name,
                **({"affiliations": list(a.affiliation_indices)} if a.affiliation_indices else {}),
                **({"corresponding": True} if a.corresponding else {}),
                **({"orcid": a.orcid} if a.orcid else {}),
            }
            for a in config.authors
        ]
    if config.affiliations:
        data["affiliations"] = [a.name for a in config.affiliations]
    if config.keywords:
        data["keywords"] = list(config.keywords)
    data["bibliography"] = config.bibliography
    data["latex_engine"] = config.latex_engine
    data["strict"] = config.strict
    defaults = GeneratorCommands()
    if config.generators != defaults:
        data["generators"] = {
            key: getattr(config.generators, key)
            for key in ("mermaid", "python", "r")
            if getattr(config.generators, key) != getattr(defaults, key)
        }
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True)
