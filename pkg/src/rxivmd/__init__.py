"""rxivmd: build engine converting rxiv-markdown manuscripts to LaTeX."""

from .convert import (
    FigureDirective,
    LatexFragment,
    TableDirective,
    convert_document,
)
from .diagnostics import Diagnostic, Diagnostics
from .figgen import (
    CacheManifest,
    FigureAsset,
    GeneratorRun,
    generate_all,
    needs_regeneration,
    run_generator,
    scan_figures,
)
from .layout import (
    Author,
    ManuscriptConfig,
    ManuscriptLayout,
    discover_layout,
    parse_config,
    serialize_config,
)
from .pipeline import BuildPlan, BuildReport, build, check_environment, compile_latex
from .protect import ProtectedText, ProtectionKind, classify_math, protect, restore
from .refs import (
    BibEntry,
    CitationOccurrence,
    LabelIndex,
    build_label_index,
    convert_citations,
    convert_crossrefs,
    parse_bibtex,
    validate_references,
)

__version__ = "0.1.0"

__all__ = [
    "Author",
    "BibEntry",
    "BuildPlan",
    "BuildReport",
    "CacheManifest",
    "CitationOccurrence",
    "Diagnostic",
    "Diagnostics",
    "FigureAsset",
    "FigureDirective",
    "GeneratorRun",
    "LabelIndex",
    "LatexFragment",
    "ManuscriptConfig",
    "ManuscriptLayout",
    "ProtectedText",
    "ProtectionKind",
    "TableDirective",
    "build",
    "build_label_index",
    "check_environment",
    "classify_math",
    "compile_latex",
    "convert_citations",
    "convert_crossrefs",
    "convert_document",
    "discover_layout",
    "generate_all",
    "needs_regeneration",
    "parse_bibtex",
    "parse_config",
    "protect",
    "restore",
    "run_generator",
    "scan_figures",
    "serialize_config",
    "validate_references",
]
