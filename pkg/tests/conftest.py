from __future__ import annotations

import shutil
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def minimal_manuscript(tmp_path: Path) -> Path:
    """A disposable copy of the minimal fixture manuscript."""
    root = tmp_path / "minimal"
    shutil.copytree(FIXTURES / "minimal", root)
    return root


@pytest.fixture
def stub_commands(tmp_path: Path):
    """Generator commands backed by counting stub scripts.

    The mermaid stub parses -i/-o and writes the output file; every stub
    invocation appends one line to counter.txt next to the stubs.
    """
    from rxivmd.layout import GeneratorCommands

    stub_dir = tmp_path / "stubs"
    stub_dir.mkdir()
    counter = stub_dir / "counter.txt"
    counter.write_text("")

    mmdc = stub_dir / "stub_mmdc"
    mmdc.write_text(
        "#!" + sys.executable + "\n"
        "import sys\n"
        f"open({str(counter)!r}, 'a').write('mmdc\\n')\n"
        "args = dict(zip(sys.argv[1::2], sys.argv[2::2]))\n"
        "open(args['-o'], 'w').write('stub output for ' + args['-i'])\n"
    )
    mmdc.chmod(0o755)
    return GeneratorCommands(mermaid=str(mmdc), python=sys.executable), counter


def invocation_count(counter: Path) -> int:
    return len(counter.read_text().splitlines())
