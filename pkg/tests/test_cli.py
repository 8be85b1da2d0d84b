from __future__ import annotations

from rxivmd.cli import cli

from test_pipeline import make_stub_engine


def test_build_fixture_exits_zero(minimal_manuscript, capsys):
    code = cli(["build", "--manuscript-dir", str(minimal_manuscript), "--skip", "latex_compilation"])
    assert code == 0
    out = capsys.readouterr().out
    assert "markdown_processing: ok" in out
    assert "latex_compilation: skipped" in out


def test_validate_clean_fixture_exits_zero(minimal_manuscript, capsys):
    # exits 0 even without a LaTeX engine installed: validate compiles nothing
    code = cli(["validate", "--manuscript-dir", str(minimal_manuscript)])
    assert code == 0
    assert "0 error(s)" in capsys.readouterr().out


def test_validate_undefined_reference_exits_one_with_one_error_line(minimal_manuscript, capsys):
    main = minimal_manuscript / "01_MAIN.md"
    main.write_text(main.read_text() + "\nDangling @fig:missing reference.\n")
    code = cli(["validate", "--manuscript-dir", str(minimal_manuscript), "--skip", "latex_compilation"])
    assert code == 1
    captured = capsys.readouterr()
    error_lines = [l for l in captured.err.splitlines() if l.startswith("error:")]
    assert len(error_lines) == 1
    assert "fig:missing" in error_lines[0]


def test_unknown_subcommand_exits_64(capsys):
    assert cli(["frobnicate"]) == 64
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exits_64(capsys):
    assert cli(["build", "--what-is-this"]) == 64


def test_skip_markdown_processing_rejected(capsys):
    code = cli(["build", "--skip", "markdown_processing"])
    assert code == 64
    assert "markdown_processing" in capsys.readouterr().err


def test_missing_manuscript_exits_two(tmp_path, capsys):
    code = cli(["validate", "--manuscript-dir", str(tmp_path / "nothing")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_figures_twice_reports_zero_regenerated(minimal_manuscript, capsys):
    assert cli(["figures", "--manuscript-dir", str(minimal_manuscript)]) == 0
    first = capsys.readouterr().out
    assert "1 regenerated, 0 cached, 0 failed" in first
    assert cli(["figures", "--manuscript-dir", str(minimal_manuscript)]) == 0
    second = capsys.readouterr().out
    assert "0 regenerated" in second


def test_convert_to_stdout(minimal_manuscript, capsys):
    code = cli(["convert", "--manuscript-dir", str(minimal_manuscript)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("\\documentclass")
    assert "\\end{document}" in out


def test_convert_to_file(minimal_manuscript, tmp_path, capsys):
    target = tmp_path / "doc.tex"
    code = cli(["convert", "--manuscript-dir", str(minimal_manuscript), "--out", str(target)])
    assert code == 0
    assert target.read_text().startswith("\\documentclass")
    assert capsys.readouterr().out == ""


def test_clean_removes_output_tree(minimal_manuscript, capsys):
    cli(["build", "--manuscript-dir", str(minimal_manuscript), "--skip", "latex_compilation"])
    output = minimal_manuscript / "output"
    assert output.is_dir()
    assert cli(["clean", "--manuscript-dir", str(minimal_manuscript)]) == 0
    assert not output.exists()


def test_strict_build_with_unknown_citation_exits_one(minimal_manuscript, capsys):
    main = minimal_manuscript / "01_MAIN.md"
    main.write_text(main.read_text() + "\nUnknown @ghostkey citation.\n")
    code = cli(
        [
            "build",
            "--manuscript-dir",
            str(minimal_manuscript),
            "--strict",
            "--skip",
            "latex_compilation",
        ]
    )
    assert code == 1
    out = capsys.readouterr()
    assert "asset_aggregation: skipped" in out.out


def test_engine_flag_reaches_compilation(minimal_manuscript, tmp_path, capsys):
    engine, counter, _ = make_stub_engine(tmp_path)
    code = cli(["build", "--manuscript-dir", str(minimal_manuscript), "--engine", str(engine)])
    assert code == 0
    assert len(counter.read_text().splitlines()) >= 3
    assert (minimal_manuscript / "output" / "01_MAIN.pdf").is_file()


def test_quiet_suppresses_non_errors(minimal_manuscript, capsys):
    code = cli(["build", "--manuscript-dir", str(minimal_manuscript), "--skip", "latex_compilation", "--quiet"])
    assert code == 0
    captured = capsys.readouterr()
    assert "warning:" not in captured.out
    assert "notice:" not in captured.out
