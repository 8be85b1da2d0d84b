"""Command-line interface: build, convert, figures, validate, clean."""

from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

from .convert import convert_document
from .diagnostics import Diagnostics
from .figgen import CacheManifest, MANIFEST_NAME, generate_all, scan_figures
from .layout import MissingFile, SchemaViolation, YamlSyntax, discover_layout, parse_config
from .pipeline import (
    BuildPlan,
    EXIT_DIAGNOSTICS,
    EXIT_ENVIRONMENT,
    EXIT_OK,
    EXIT_USAGE,
    PlanError,
    STAGES,
    build,
    check_environment,
    render_document,
)
from .refs import build_label_index, load_bibliography, validate_references


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 64 instead of argparse's 2
        raise _UsageError(message)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manuscript-dir", default=".", help="manuscript root directory")
    parser.add_argument("--output-dir", default=None, help="output tree (default: <root>/output)")
    parser.add_argument("--strict", action="store_true", help="treat manuscript defects as errors")
    parser.add_argument("--force-figures", action="store_true", help="regenerate every figure asset")
    parser.add_argument(
        "--skip",
        action="append",
        default=[],
        metavar="STAGE",
        help=f"skip a pipeline stage ({', '.join(STAGES)})",
    )
    parser.add_argument("--engine", default=None, help="LaTeX engine command")
    parser.add_argument("--jobs", type=int, default=1, help="parallel figure generators")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="only print errors")
    verbosity.add_argument("--verbose", action="store_true", help="also print notices")


def _build_parser() -> _Parser:
    parser = _Parser(prog="rxivmd", description="rxiv-markdown manuscript build engine")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("build", "run the full five-stage pipeline"),
        ("convert", "convert markdown to LaTeX and emit the document"),
        ("figures", "generate figure assets only"),
        ("validate", "analyse the manuscript without producing output"),
        ("clean", "remove the output tree and cache manifest"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common_flags(p)
        if name == "convert":
            p.add_argument("--out", default=None, help="write the .tex here instead of stdout")
    return parser


def _print_diagnostics(diag: Diagnostics, *, quiet: bool, verbose: bool) -> None:
    for item in diag:
        if quiet and item.severity != "error":
            continue
        if item.severity == "notice" and not verbose and not quiet:
            # summary notices are worth showing by default
            if item.code not in ("FigureSummary", "BibSkipped"):
                continue
        elif item.severity == "notice" and quiet:
            continue
        stream = sys.stderr if item.severity == "error" else sys.stdout
        print(item.format(), file=stream)


def _plan_from_args(args: argparse.Namespace) -> BuildPlan:
    return BuildPlan(
        skip=set(args.skip),
        strict=args.strict,
        force_figures=args.force_figures,
        jobs=args.jobs,
        engine=args.engine,
        output_dir=Path(args.output_dir) if args.output_dir else None,
    )


def cli(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        plan = _plan_from_args(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return _dispatch(args, plan)
    except (MissingFile, YamlSyntax, SchemaViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT


def _dispatch(args: argparse.Namespace, plan: BuildPlan) -> int:
    root = Path(args.manuscript_dir)
    quiet, verbose = args.quiet, args.verbose

    if args.command == "build":
        report = build(root, plan)
        _print_diagnostics(report.all_diagnostics(), quiet=quiet, verbose=verbose)
        if not quiet:
            for stage, result in report.per_stage.items():
                print(f"{stage}: {result.status}")
        return report.exit_code

    if args.command == "clean":
        layout = discover_layout(root)
        output_dir = plan.output_dir or layout.output_dir
        if output_dir.exists():
            shutil.rmtree(output_dir)
            if not quiet:
                print(f"removed {output_dir}")
        return EXIT_OK

    if args.command == "figures":
        layout = discover_layout(root)
        if plan.output_dir is not None:
            layout = layout.with_output_dir(plan.output_dir.resolve())
        config = parse_config(layout.config_yaml)
        diag = Diagnostics()
        assets = scan_figures(layout.figures_dir, diag)
        manifest_path = layout.output_dir / "FIGURES" / MANIFEST_NAME
        manifest = CacheManifest.load(manifest_path)
        manifest, gen_diag = generate_all(
            assets,
            manifest,
            force=plan.force_figures,
            parallelism=max(1, plan.jobs),
            commands=config.generators,
            log_dir=layout.output_dir / "logs",
        )
        diag.extend(gen_diag)
        manifest.save(manifest_path)
        summary = next((d for d in diag if d.code == "FigureSummary"), None)
        if summary is not None:
            print(summary.message)
        _print_diagnostics(diag, quiet=quiet, verbose=verbose)
        strict = plan.strict or config.strict
        if diag.has_errors():
            return EXIT_DIAGNOSTICS if strict else EXIT_OK
        return EXIT_OK

    # convert and validate share the analysis path
    layout = discover_layout(root)
    config = parse_config(layout.config_yaml)
    strict = plan.strict or config.strict
    diag = Diagnostics()
    documents = [layout.main_md.read_text(encoding="utf-8")]
    names = [layout.main_md.name]
    if layout.supplementary_md is not None:
        documents.append(layout.supplementary_md.read_text(encoding="utf-8"))
        names.append(layout.supplementary_md.name)
    index, idx_diag = build_label_index(documents, names)
    diag.extend(idx_diag)
    bib_path = layout.root_dir / config.bibliography
    bib = []
    if bib_path.is_file():
        bib, bib_diag = load_bibliography(bib_path, strict=strict)
        diag.extend(bib_diag)
    else:
        diag.error("MissingFile", f"bibliography {bib_path} not found")

    fragments = []
    occurrences = []
    for text, name in zip(documents, names):
        fragment, doc_diag = convert_document(text, index, bib, strict=strict, file=name)
        diag.extend(doc_diag)
        fragments.append(fragment)
        occurrences.extend(fragment.citations)
    diag.extend(validate_references(occurrences, index, bib))

    if args.command == "validate":
        # validate neither generates nor compiles, so missing tools are
        # warnings/notices here rather than errors
        env_plan = BuildPlan(
            skip=plan.skip | {"latex_compilation", "content_generation"},
            strict=plan.strict,
            engine=plan.engine,
        )
        diag.extend(check_environment(config, env_plan, scan_figures(layout.figures_dir)))
        _print_diagnostics(diag, quiet=quiet, verbose=verbose)
        if not quiet:
            errors = len(diag.errors)
            print(f"validate: {errors} error(s), {len(diag.warnings)} warning(s)")
        return EXIT_DIAGNOSTICS if diag.has_errors() else EXIT_OK

    # convert
    has_citations = any("\\cite{" in f.content for f in fragments)
    document = render_document(
        config,
        fragments[0],
        fragments[1] if len(fragments) > 1 else None,
        Path(config.bibliography).stem,
        has_citations,
    )
    _print_diagnostics(diag, quiet=quiet, verbose=verbose)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(document, encoding="utf-8")
    else:
        sys.stdout.write(document)
    if strict and diag.has_errors():
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
