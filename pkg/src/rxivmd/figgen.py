"""Figure source discovery, conditional regeneration, and generator execution.

Regeneration is decided per asset from the persisted cache manifest: an asset
is rebuilt when it has no manifest entry, when any recorded output is missing
on disk, or when its content hash differs from the recorded one. The hash
comparison dominates the recorded mtime, so touching a file without changing
its bytes never triggers a rebuild and a stale mtime after a checkout never
suppresses one.

Generators run as argument-vector subprocesses in the figures directory with
RXIV_FIGURES_DIR set, stdout/stderr captured, and a wall-clock timeout.
Mermaid sources are rendered once per output variant (SVG, PNG, PDF); script
outputs are detected by diffing a directory snapshot around the run.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import Diagnostics
from .layout import GeneratorCommands

MANIFEST_NAME = ".rxiv_cache.json"
MANIFEST_VERSION = 1
DEFAULT_TIMEOUT = 300.0

KIND_BY_EXTENSION = {
    ".mmd": "mermaid",
    ".py": "pyscript",
    ".r": "rscript",
    ".png": "static",
    ".jpg": "static",
    ".svg": "static",
    ".tex": "tikz",
    ".tikz": "tikz",
    ".csv": "data",
    ".json": "data",
    ".xlsx": "data",
}
GENERATOR_KINDS = frozenset({"mermaid", "pyscript", "rscript"})
MERMAID_VARIANTS = (".svg", ".png", ".pdf")


class GeneratorMissing(Exception):
    def __init__(self, command: str):
        self.command = command
        super().__init__(f"generator command not found on PATH: {command}")


class GeneratorFailed(Exception):
    def __init__(self, exit_code: int, stderr: str):
        self.exit_code = exit_code
        self.stderr = stderr
        excerpt = stderr.strip().splitlines()[-1] if stderr.strip() else ""
        super().__init__(f"generator exited with {exit_code}" + (f": {excerpt}" if excerpt else ""))


class GeneratorTimeout(Exception):
    def __init__(self, seconds: float):
        self.seconds = seconds
        super().__init__(f"generator exceeded the {seconds:g}s timeout")


@dataclass
class FigureAsset:
    source_path: Path
    kind: str
    expected_outputs: list[Path] = field(default_factory=list)
    source_mtime: float = 0.0
    source_hash: str = ""

    @property
    def rel_name(self) -> str:
        return self.source_path.name


@dataclass
class GeneratorRun:
    command: list[str]
    working_dir: Path
    timeout_seconds: float = DEFAULT_TIMEOUT
    captured_stdout: str = ""
    captured_stderr: str = ""
    exit_code: int = 0


@dataclass
class CacheManifest:
    entries: dict[str, dict] = field(default_factory=dict)
    manifest_version: int = MANIFEST_VERSION

    @classmethod
    def load(cls, path: Path) -> CacheManifest:
        path = Path(path)
        if not path.is_file():
            return cls()
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return cls()
        if not isinstance(data, dict) or data.get("manifest_version") != MANIFEST_VERSION:
            return cls()
        entries = data.get("entries", {})
        return cls(entries=entries if isinstance(entries, dict) else {})

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"manifest_version": self.manifest_version, "entries": self.entries}
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)


def file_hash(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def scan_figures(figures_dir: Path | str, diagnostics: Diagnostics | None = None) -> list[FigureAsset]:
    """List recognised figure sources, lexicographically by name.

    Hidden files and the cache manifest are skipped; an absent directory yields
    an empty list with a notice.
    """
    figures_dir = Path(figures_dir)
    if not figures_dir.is_dir():
        if diagnostics is not None:
            diagnostics.notice("NoFiguresDir", f"figures directory {figures_dir} does not exist")
        return []
    assets: list[FigureAsset] = []
    for entry in sorted(figures_dir.iterdir(), key=lambda p: p.name):
        if not entry.is_file() or entry.name.startswith("."):
            continue
        kind = KIND_BY_EXTENSION.get(entry.suffix.lower())
        if kind is None:
            continue
        expected = (
            [entry.with_suffix(ext) for ext in MERMAID_VARIANTS] if kind == "mermaid" else []
        )
        stat = entry.stat()
        assets.append(
            FigureAsset(
                source_path=entry,
                kind=kind,
                expected_outputs=expected,
                source_mtime=stat.st_mtime,
                source_hash=file_hash(entry),
            )
        )
    return assets


def needs_regeneration(asset: FigureAsset, manifest: CacheManifest) -> bool:
    """True when the asset is unknown, an output is missing, or its bytes changed."""
    entry = manifest.entries.get(asset.rel_name)
    if entry is None:
        return True
    figures_dir = asset.source_path.parent
    recorded_outputs = [rel for rel, _ in entry.get("outputs", [])]
    for output in [*asset.expected_outputs, *(figures_dir / rel for rel in recorded_outputs)]:
        if not Path(output).exists():
            return True
    return asset.source_hash != entry.get("hash")


def _snapshot(figures_dir: Path) -> dict[str, tuple[int, int]]:
    state: dict[str, tuple[int, int]] = {}
    for path in figures_dir.rglob("*"):
        if path.is_file() and not any(part.startswith(".") for part in path.relative_to(figures_dir).parts):
            stat = path.stat()
            state[path.relative_to(figures_dir).as_posix()] = (stat.st_mtime_ns, stat.st_size)
    return state


def _run_subprocess(argv: list[str], cwd: Path, timeout: float) -> subprocess.CompletedProcess:
    executable = shutil.which(argv[0])
    if executable is None:
        raise GeneratorMissing(argv[0])
    env = dict(os.environ, RXIV_FIGURES_DIR=str(cwd))
    try:
        return subprocess.run(
            argv, cwd=cwd, env=env, capture_output=True, text=True, timeout=timeout
        )
    except subprocess.TimeoutExpired as exc:
        raise GeneratorTimeout(timeout) from exc


# Script runs are serialized so the before/after snapshot window of one script
# never picks up files created by a concurrently running one.
_snapshot_lock = threading.Lock()


def run_generator(
    asset: FigureAsset,
    force: bool = False,
    *,
    commands: GeneratorCommands = GeneratorCommands(),
    timeout: float = DEFAULT_TIMEOUT,
) -> tuple[GeneratorRun, list[Path]]:
    """Execute the generator for one asset and return the run plus its outputs.

    The regenerate-or-not decision belongs to the caller (see generate_all);
    calling this always runs the generator.
    """
    figures_dir = asset.source_path.parent
    if asset.kind == "mermaid":
        stdout, stderr = [], []
        run = GeneratorRun(command=[], working_dir=figures_dir, timeout_seconds=timeout)
        for ext in MERMAID_VARIANTS:
            argv = [commands.mermaid, "-i", asset.rel_name, "-o", asset.source_path.with_suffix(ext).name]
            run.command = argv
            proc = _run_subprocess(argv, figures_dir, timeout)
            stdout.append(proc.stdout)
            stderr.append(proc.stderr)
            if proc.returncode != 0:
                run.captured_stdout = "".join(stdout)
                run.captured_stderr = "".join(stderr)
                run.exit_code = proc.returncode
                raise GeneratorFailed(proc.returncode, run.captured_stderr)
        run.captured_stdout = "".join(stdout)
        run.captured_stderr = "".join(stderr)
        outputs = [p for p in asset.expected_outputs if p.exists()]
        return run, outputs

    interpreter = commands.python if asset.kind == "pyscript" else commands.r
    argv = [interpreter, asset.rel_name]
    with _snapshot_lock:
        before = _snapshot(figures_dir)
        proc = _run_subprocess(argv, figures_dir, timeout)
        after = _snapshot(figures_dir)
    run = GeneratorRun(
        command=argv,
        working_dir=figures_dir,
        timeout_seconds=timeout,
        captured_stdout=proc.stdout,
        captured_stderr=proc.stderr,
        exit_code=proc.returncode,
    )
    if proc.returncode != 0:
        raise GeneratorFailed(proc.returncode, proc.stderr)
    created = [
        rel
        for rel, state in after.items()
        if rel != asset.rel_name and before.get(rel) != state
    ]
    return run, [figures_dir / rel for rel in sorted(created)]


def generate_all(
    assets: list[FigureAsset],
    manifest: CacheManifest,
    force: bool = False,
    parallelism: int = 1,
    *,
    commands: GeneratorCommands = GeneratorCommands(),
    timeout: float = DEFAULT_TIMEOUT,
    log_dir: Path | None = None,
) -> tuple[CacheManifest, Diagnostics]:
    """Regenerate exactly the stale generator assets; update manifest on success.

    When log_dir is given every run's captured stdout/stderr is written there
    as <source-name>.log.
    """
    diag = Diagnostics()
    generator_assets = [a for a in assets if a.kind in GENERATOR_KINDS]
    stale = [a for a in generator_assets if force or needs_regeneration(a, manifest)]
    cached = len(generator_assets) - len(stale)
    failed = 0

    def persist_log(asset: FigureAsset, stdout: str, stderr: str) -> None:
        if log_dir is None:
            return
        log_dir.mkdir(parents=True, exist_ok=True)
        (log_dir / f"{asset.rel_name}.log").write_text(stdout + "\n" + stderr, encoding="utf-8")

    def job(asset: FigureAsset) -> tuple[FigureAsset, list[Path] | None, Exception | None]:
        try:
            run, outputs = run_generator(asset, force, commands=commands, timeout=timeout)
            persist_log(asset, run.captured_stdout, run.captured_stderr)
            return asset, outputs, None
        except (GeneratorMissing, GeneratorFailed, GeneratorTimeout) as exc:
            persist_log(asset, "", getattr(exc, "stderr", str(exc)))
            return asset, None, exc

    results: list[tuple[FigureAsset, list[Path] | None, Exception | None]]
    if parallelism > 1 and len(stale) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(job, stale))
    else:
        results = [job(asset) for asset in stale]

    for asset, outputs, exc in results:
        name = asset.rel_name
        if exc is not None:
            failed += 1
            code = {
                GeneratorMissing: "GeneratorMissing",
                GeneratorFailed: "GeneratorFailed",
                GeneratorTimeout: "Timeout",
            }[type(exc)]
            diag.error(code, f"{name}: {exc}", file=name)
            continue
        manifest.entries[name] = {
            "hash": asset.source_hash,
            "mtime": asset.source_mtime,
            "outputs": sorted(
                [p.relative_to(asset.source_path.parent).as_posix(), file_hash(p)]
                for p in (outputs or [])
                if p.exists()
            ),
        }
    regenerated = len(stale) - failed
    diag.notice(
        "FigureSummary",
        f"{regenerated} regenerated, {cached} cached, {failed} failed",
    )
    return manifest, diag
