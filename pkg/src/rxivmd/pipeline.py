"""Five-stage build orchestration: environment, figures, markdown, assets, LaTeX.

Stages run strictly in the fixed order; a failed stage skips everything after
it. Strict mode turns manuscript-defect diagnostics (unknown citation,
undefined label, generator failure) into stage failures. The build report is
always written into the output tree, even for failed builds.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from .convert import FigureDirective, LatexFragment, convert_document
from .diagnostics import Diagnostics
from .figgen import (
    CacheManifest,
    FigureAsset,
    MANIFEST_NAME,
    generate_all,
    scan_figures,
)
from .layout import (
    ManuscriptConfig,
    ManuscriptLayout,
    MissingFile,
    SchemaViolation,
    YamlSyntax,
    discover_layout,
    parse_config,
)
from .refs import (
    BibEntry,
    CitationOccurrence,
    LabelIndex,
    build_label_index,
    load_bibliography,
    validate_references,
)

STAGES = (
    "env_setup",
    "content_generation",
    "markdown_processing",
    "asset_aggregation",
    "latex_compilation",
)

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_ENVIRONMENT = 2
EXIT_USAGE = 64

ENGINE_ENV_VAR = "RXIV_ENGINE"
BIB_PROCESSOR = "bibtex"

_UNDEFINED_LOG = re.compile(r"LaTeX Warning: (Reference|Citation) .* undefined|There were undefined references", re.IGNORECASE)
_RERUN_LOG = re.compile(r"Rerun to get|rerunfilecheck", re.IGNORECASE)


class PlanError(Exception):
    pass


@dataclass
class BuildPlan:
    skip: set[str] = field(default_factory=set)
    strict: bool = False
    force_figures: bool = False
    jobs: int = 1
    engine: str | None = None
    output_dir: Path | None = None

    def __post_init__(self) -> None:
        unknown = self.skip - set(STAGES)
        if unknown:
            raise PlanError(f"unknown stage(s): {', '.join(sorted(unknown))}")
        if "markdown_processing" in self.skip:
            raise PlanError("markdown_processing cannot be skipped")


@dataclass
class StageResult:
    status: str  # ok | skipped | failed
    duration_seconds: float = 0.0
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


@dataclass
class BuildReport:
    per_stage: dict[str, StageResult] = field(default_factory=dict)
    artifacts: list[Path] = field(default_factory=list)
    exit_code: int = 0

    def all_diagnostics(self) -> Diagnostics:
        merged = Diagnostics()
        for result in self.per_stage.values():
            merged.extend(result.diagnostics)
        return merged

    def to_payload(self) -> dict:
        return {
            "exit_code": self.exit_code,
            "stages": {
                name: {
                    "status": result.status,
                    "duration_seconds": round(result.duration_seconds, 4),
                    "diagnostics": result.diagnostics.to_payload(),
                }
                for name, result in self.per_stage.items()
            },
            "artifacts": [str(p) for p in self.artifacts],
        }

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_payload(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def resolve_engine(config: ManuscriptConfig, plan: BuildPlan | None = None) -> str:
    """Flag wins over RXIV_ENGINE over config.latex_engine."""
    if plan is not None and plan.engine:
        return plan.engine
    return os.environ.get(ENGINE_ENV_VAR) or config.latex_engine


def check_environment(
    config: ManuscriptConfig,
    plan: BuildPlan | None = None,
    assets: list[FigureAsset] | None = None,
) -> Diagnostics:
    """Probe the external tools a build would need; severity follows need.

    A missing tool needed by a planned stage is an error; needed but the stage
    is skipped, a warning; not needed by any present asset, a notice.
    """
    diag = Diagnostics()
    plan = plan or BuildPlan()
    assets = assets or []
    engine = resolve_engine(config, plan)
    kinds = {a.kind for a in assets}

    def probe(command: str, needed: bool, planned: bool, what: str) -> None:
        if shutil.which(command):
            return
        message = f"{what} '{command}' not found on PATH"
        if not needed:
            diag.notice("ToolMissing", message + " (nothing currently needs it)")
        elif planned:
            diag.error("ToolMissing", message)
        else:
            diag.warning("ToolMissing", message + " (its stage is skipped)")

    compile_planned = "latex_compilation" not in plan.skip
    probe(engine, True, compile_planned, "LaTeX engine")
    probe(BIB_PROCESSOR, True, False, "bibliography processor")
    generation_planned = "content_generation" not in plan.skip
    probe(config.generators.mermaid, "mermaid" in kinds, generation_planned, "mermaid CLI")
    probe(config.generators.python, "pyscript" in kinds, generation_planned, "python interpreter")
    probe(config.generators.r, "rscript" in kinds, generation_planned, "R interpreter")
    return diag


def aggregate_assets(
    layout: ManuscriptLayout,
    manifest: CacheManifest | None,
    directives: list[FigureDirective],
) -> tuple[Diagnostics, list[Path]]:
    """Copy every referenced figure file (and the bibliography) into the output tree."""
    diag = Diagnostics()
    staged: list[Path] = []
    for directive in directives:
        source = layout.root_dir / directive.path
        if not source.is_file():
            label = directive.label or "<unlabeled>"
            diag.error(
                "MissingFigureFile",
                f"figure file '{directive.path}' referenced by {label} does not exist",
            )
            continue
        target = layout.output_dir / directive.path
        target.parent.mkdir(parents=True, exist_ok=True)
        if not target.exists() or file_differs(source, target):
            shutil.copy2(source, target)
        staged.append(target)
    if layout.bibliography_bib.is_file():
        target = layout.output_dir / layout.bibliography_bib.name
        target.parent.mkdir(parents=True, exist_ok=True)
        if not target.exists() or file_differs(layout.bibliography_bib, target):
            shutil.copy2(layout.bibliography_bib, target)
        staged.append(target)
    return diag, staged


def file_differs(a: Path, b: Path) -> bool:
    try:
        if a.stat().st_size != b.stat().st_size:
            return True
        return a.read_bytes() != b.read_bytes()
    except OSError:
        return True


def compile_latex(
    main_tex: Path,
    engine: str,
    output_dir: Path,
    *,
    max_extra_passes: int = 2,
    timeout: float = 300.0,
) -> tuple[Diagnostics, list[Path]]:
    """Run engine -> bibliography -> engine -> engine, rerunning on log warnings.

    The bibliography pass is skipped with a notice when the document has no
    citations. Logs are written under output/logs/ and scanned for undefined
    reference markers.
    """
    diag = Diagnostics()
    artifacts: list[Path] = []
    if shutil.which(engine) is None:
        diag.error("EngineFailed", f"LaTeX engine '{engine}' not found on PATH")
        return diag, artifacts
    logs_dir = output_dir / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)
    stem = main_tex.stem
    tex_source = main_tex.read_text(encoding="utf-8")
    has_citations = "\\cite{" in tex_source

    step = 0

    def run(argv: list[str], name: str) -> subprocess.CompletedProcess | None:
        nonlocal step
        step += 1
        try:
            proc = subprocess.run(
                argv, cwd=output_dir, capture_output=True, text=True, timeout=timeout
            )
        except subprocess.TimeoutExpired:
            diag.error("EngineFailed", f"{name} exceeded the {timeout:g}s timeout")
            return None
        (logs_dir / f"{step:02d}-{name}.log").write_text(
            proc.stdout + "\n" + proc.stderr, encoding="utf-8"
        )
        return proc

    engine_argv = [engine, "-interaction=nonstopmode", main_tex.name]
    engine_name = Path(engine).name

    proc = run(engine_argv, engine_name)
    if proc is None or proc.returncode != 0:
        if proc is not None:
            diag.error("EngineFailed", _log_excerpt(proc, f"{engine} exited with {proc.returncode}"))
        return diag, artifacts

    if has_citations:
        if shutil.which(BIB_PROCESSOR):
            bib_proc = run([BIB_PROCESSOR, stem], BIB_PROCESSOR)
            if bib_proc is not None and bib_proc.returncode >= 2:
                diag.error("EngineFailed", _log_excerpt(bib_proc, f"{BIB_PROCESSOR} exited with {bib_proc.returncode}"))
                return diag, artifacts
        else:
            diag.warning("ToolMissing", f"'{BIB_PROCESSOR}' not found; citations will stay unresolved")
    else:
        diag.notice("BibSkipped", "document has no citations; bibliography pass skipped")

    for _ in range(2):
        proc = run(engine_argv, engine_name)
        if proc is None or proc.returncode != 0:
            if proc is not None:
                diag.error("EngineFailed", _log_excerpt(proc, f"{engine} exited with {proc.returncode}"))
            return diag, artifacts

    log_path = output_dir / f"{stem}.log"
    extra = 0
    while extra < max_extra_passes and _log_wants_rerun(log_path):
        proc = run(engine_argv, engine_name)
        if proc is None or proc.returncode != 0:
            if proc is not None:
                diag.error("EngineFailed", _log_excerpt(proc, f"{engine} exited with {proc.returncode}"))
            return diag, artifacts
        extra += 1

    if _log_has_undefined(log_path):
        diag.error("UnresolvedAfterReruns", "undefined references remain after the full pass sequence")
    pdf = output_dir / f"{stem}.pdf"
    if pdf.is_file():
        artifacts.append(pdf)
    return diag, artifacts


def _log_excerpt(proc: subprocess.CompletedProcess, prefix: str) -> str:
    tail = "\n".join((proc.stdout or "").splitlines()[-6:])
    return f"{prefix}\n{tail}" if tail else prefix


def _read_log(log_path: Path) -> str:
    try:
        return log_path.read_text(encoding="utf-8", errors="replace")
    except OSError:
        return ""


def _log_has_undefined(log_path: Path) -> bool:
    return bool(_UNDEFINED_LOG.search(_read_log(log_path)))


def _log_wants_rerun(log_path: Path) -> bool:
    return bool(_RERUN_LOG.search(_read_log(log_path)))


def render_document(
    config: ManuscriptConfig,
    main_fragment: LatexFragment,
    supplementary_fragment: LatexFragment | None,
    bibliography_stem: str,
    has_citations: bool,
) -> str:
    """Wrap converted fragments in a minimal compilable document."""
    packages = {"graphicx", "amsmath", "textcomp"}
    packages |= main_fragment.required_packages
    if supplementary_fragment is not None:
        packages |= supplementary_fragment.required_packages
    packages.discard("hyperref")  # loaded last, unconditionally

    authors = " \\and ".join(_author_block(a) for a in config.authors) or "~"
    lines = [
        "\\documentclass[11pt]{article}",
        "\\usepackage[T1]{fontenc}",
    ]
    lines += [f"\\usepackage{{{name}}}" for name in sorted(packages)]
    lines += [
        "\\usepackage{hyperref}",
        "% supplementary float variants used by sfig:/stable: labels",
        "\\newenvironment{sfigure}[1][t]"
        "{\\renewcommand{\\figurename}{Supplementary Figure}\\begin{figure}[#1]}"
        "{\\end{figure}}",
        f"\\title{{{config.title}}}",
        f"\\author{{{authors}}}",
        "\\date{}",
        "\\begin{document}",
        "\\maketitle",
    ]
    if config.affiliations:
        affil_lines = [
            f"\\textsuperscript{{{idx}}}{affil.name}\\par"
            for idx, affil in enumerate(config.affiliations, start=1)
        ]
        lines += ["\\begin{center}\\small", *affil_lines, "\\end{center}"]
    lines += ["", main_fragment.content, ""]
    if has_citations:
        lines += ["\\bibliographystyle{unsrt}", f"\\bibliography{{{bibliography_stem}}}", ""]
    if supplementary_fragment is not None:
        lines += ["\\clearpage", "", supplementary_fragment.content, ""]
    lines.append("\\end{document}")
    return "\n".join(lines) + "\n"


def _author_block(author) -> str:
    marks = ",".join(str(i) for i in author.affiliation_indices)
    suffix = f"\\textsuperscript{{{marks}}}" if marks else ""
    return f"{author.name}{suffix}"


@dataclass
class _BuildState:
    layout: ManuscriptLayout | None = None
    config: ManuscriptConfig | None = None
    assets: list[FigureAsset] = field(default_factory=list)
    manifest: CacheManifest = field(default_factory=CacheManifest)
    directives: list[FigureDirective] = field(default_factory=list)
    occurrences: list[CitationOccurrence] = field(default_factory=list)
    index: LabelIndex | None = None
    bib: list[BibEntry] = field(default_factory=list)
    main_tex: Path | None = None
    strict: bool = False
    engine: str = "pdflatex"
    artifacts: list[Path] = field(default_factory=list)
    failure_kind: str | None = None  # "diagnostics" | "environment"


def build(root_dir: Path | str, plan: BuildPlan | None = None) -> BuildReport:
    """Execute the five-stage pipeline and write the report into the output tree.

    Layout and configuration resolution always runs (every later stage needs
    it); skipping env_setup only skips the tool availability checks.
    """
    plan = plan or BuildPlan()
    report = BuildReport()
    state = _BuildState()

    stage_fns = {
        "env_setup": _stage_env_setup,
        "content_generation": _stage_content_generation,
        "markdown_processing": _stage_markdown_processing,
        "asset_aggregation": _stage_asset_aggregation,
        "latex_compilation": _stage_latex_compilation,
    }

    failed = not _run_stage(report, "env_setup", stage_fns["env_setup"], Path(root_dir), plan, state,
                            skipped="env_setup" in plan.skip, bootstrap=True)
    for stage in STAGES[1:]:
        if failed or stage in plan.skip:
            report.per_stage[stage] = StageResult(status="skipped")
            continue
        failed = not _run_stage(report, stage, stage_fns[stage], Path(root_dir), plan, state)

    report.artifacts = [p for p in state.artifacts if Path(p).exists()]
    if failed:
        report.exit_code = EXIT_DIAGNOSTICS if state.failure_kind == "diagnostics" else EXIT_ENVIRONMENT
    else:
        report.exit_code = EXIT_OK

    output_dir = state.layout.output_dir if state.layout else Path(root_dir) / "output"
    try:
        report_path = output_dir / "build_report.json"
        report.write(report_path)
        if report_path not in report.artifacts:
            report.artifacts.append(report_path)
    except OSError:
        pass
    return report


def _run_stage(
    report: BuildReport,
    stage: str,
    fn,
    root: Path,
    plan: BuildPlan,
    state: _BuildState,
    *,
    skipped: bool = False,
    bootstrap: bool = False,
) -> bool:
    """Run one stage; returns False when the stage failed."""
    started = time.monotonic()
    diag = Diagnostics()
    status = "skipped" if skipped else "ok"
    try:
        if bootstrap:
            _bootstrap(root, plan, state, diag)
        if not skipped:
            fn(root, plan, state, diag)
    except (MissingFile, YamlSyntax, SchemaViolation, ValueError) as exc:
        diag.error(type(exc).__name__, str(exc))
        status = "failed"
        state.failure_kind = "environment"
    except OSError as exc:
        diag.error("IOError", str(exc))
        status = "failed"
        state.failure_kind = "environment"
    if status == "ok" and state.strict and diag.has_errors():
        status = "failed"
        state.failure_kind = state.failure_kind or "diagnostics"
    if status == "ok" and stage == "latex_compilation" and diag.has_errors():
        status = "failed"
        state.failure_kind = state.failure_kind or "environment"
    report.per_stage[stage] = StageResult(
        status=status, duration_seconds=time.monotonic() - started, diagnostics=diag
    )
    return status != "failed"


def _bootstrap(root: Path, plan: BuildPlan, state: _BuildState, diag: Diagnostics) -> None:
    layout = discover_layout(root)
    if plan.output_dir is not None:
        layout = layout.with_output_dir(plan.output_dir.resolve())
    state.layout = layout
    state.config = parse_config(layout.config_yaml, strict=plan.strict, diagnostics=diag)
    state.strict = plan.strict or state.config.strict
    if state.strict:
        for d in list(diag.warnings):
            if d.code == "UnknownConfigKey":
                diag.error(d.code, d.message)
    state.engine = resolve_engine(state.config, plan)
    layout.output_dir.mkdir(parents=True, exist_ok=True)


def _stage_env_setup(root: Path, plan: BuildPlan, state: _BuildState, diag: Diagnostics) -> None:
    layout = state.layout
    assert layout is not None and state.config is not None
    state.assets = scan_figures(layout.figures_dir, diag)
    diag.extend(check_environment(state.config, plan, state.assets))


def _manifest_path(layout: ManuscriptLayout) -> Path:
    return layout.output_dir / "FIGURES" / MANIFEST_NAME


def _stage_content_generation(root: Path, plan: BuildPlan, state: _BuildState, diag: Diagnostics) -> None:
    layout = state.layout
    assert layout is not None and state.config is not None
    # Rescan rather than reuse the env_setup listing: hashes must be current,
    # and env_setup may have been skipped.
    assets = scan_figures(layout.figures_dir, diag)
    manifest = CacheManifest.load(_manifest_path(layout))
    manifest, gen_diag = generate_all(
        assets,
        manifest,
        force=plan.force_figures,
        parallelism=max(1, plan.jobs),
        commands=state.config.generators,
        log_dir=layout.output_dir / "logs",
    )
    diag.extend(gen_diag)
    state.manifest = manifest
    manifest.save(_manifest_path(layout))


def _stage_markdown_processing(root: Path, plan: BuildPlan, state: _BuildState, diag: Diagnostics) -> None:
    layout = state.layout
    assert layout is not None and state.config is not None
    documents = [layout.main_md.read_text(encoding="utf-8")]
    names = [layout.main_md.name]
    if layout.supplementary_md is not None:
        documents.append(layout.supplementary_md.read_text(encoding="utf-8"))
        names.append(layout.supplementary_md.name)

    index, idx_diag = build_label_index(documents, names)
    diag.extend(idx_diag)
    state.index = index

    bib_path = layout.root_dir / state.config.bibliography
    if bib_path.is_file():
        state.bib, bib_diag = load_bibliography(bib_path, strict=state.strict)
        diag.extend(bib_diag)
    else:
        diag.warning("MissingFile", f"bibliography {bib_path} not found; citations cannot resolve")
        state.bib = []

    fragments: list[LatexFragment] = []
    for text, name in zip(documents, names):
        fragment, doc_diag = convert_document(text, index, state.bib, strict=state.strict, file=name)
        diag.extend(doc_diag)
        fragments.append(fragment)
        state.directives.extend(fragment.figures)
        state.occurrences.extend(fragment.citations)

    diag.extend(validate_references(state.occurrences, index, state.bib))

    supplementary = fragments[1] if len(fragments) > 1 else None
    has_citations = any("\\cite{" in f.content for f in fragments)
    document = render_document(
        state.config,
        fragments[0],
        supplementary,
        Path(state.config.bibliography).stem,
        has_citations,
    )
    layout.output_dir.mkdir(parents=True, exist_ok=True)
    main_tex = layout.output_dir / (layout.main_md.stem + ".tex")
    main_tex.write_text(document, encoding="utf-8")
    state.main_tex = main_tex
    state.artifacts.append(main_tex)
    if supplementary is not None and layout.supplementary_md is not None:
        supp_tex = layout.output_dir / (layout.supplementary_md.stem + ".tex")
        supp_tex.write_text(supplementary.content + "\n", encoding="utf-8")
        state.artifacts.append(supp_tex)


def _stage_asset_aggregation(root: Path, plan: BuildPlan, state: _BuildState, diag: Diagnostics) -> None:
    layout = state.layout
    assert layout is not None
    agg_diag, staged = aggregate_assets(layout, state.manifest, state.directives)
    diag.extend(agg_diag)
    state.artifacts.extend(staged)


def _stage_latex_compilation(root: Path, plan: BuildPlan, state: _BuildState, diag: Diagnostics) -> None:
    layout = state.layout
    assert layout is not None and state.main_tex is not None
    compile_diag, artifacts = compile_latex(state.main_tex, state.engine, layout.output_dir)
    diag.extend(compile_diag)
    state.artifacts.extend(artifacts)
