from __future__ import annotations

from pathlib import Path

import pytest

from rxivmd.diagnostics import Diagnostics
from rxivmd.layout import (
    Affiliation,
    Author,
    GeneratorCommands,
    ManuscriptConfig,
    MissingFile,
    SchemaViolation,
    YamlSyntax,
    discover_layout,
    parse_config,
    parse_config_text,
    serialize_config,
)

FIXTURE = Path(__file__).parent / "fixtures" / "minimal"


def make_minimal(tmp_path: Path) -> Path:
    (tmp_path / "01_MAIN.md").write_text("# T\n")
    (tmp_path / "00_CONFIG.yml").write_text("title: T\n")
    (tmp_path / "03_REFERENCES.bib").write_text("")
    return tmp_path


def test_minimal_layout_without_supplementary(tmp_path):
    layout = discover_layout(make_minimal(tmp_path))
    assert layout.supplementary_md is None
    assert layout.main_md.name == "01_MAIN.md"
    assert layout.output_dir == layout.root_dir / "output"


def test_missing_config_raises(tmp_path):
    (tmp_path / "01_MAIN.md").write_text("x")
    (tmp_path / "03_REFERENCES.bib").write_text("")
    with pytest.raises(MissingFile) as exc:
        discover_layout(tmp_path)
    assert exc.value.role == "config_yaml"
    assert "00_CONFIG.yml" in str(exc.value)


def test_missing_bibliography_raises(tmp_path):
    (tmp_path / "01_MAIN.md").write_text("x")
    (tmp_path / "00_CONFIG.yml").write_text("title: T")
    with pytest.raises(MissingFile) as exc:
        discover_layout(tmp_path)
    assert exc.value.role == "bibliography"


def test_fully_populated_layout(tmp_path):
    root = make_minimal(tmp_path)
    (root / "02_SUPPLEMENTARY.md").write_text("supp")
    (root / "FIGURES").mkdir()
    layout = discover_layout(root)
    assert layout.main_md == root.resolve() / "01_MAIN.md"
    assert layout.config_yaml == root.resolve() / "00_CONFIG.yml"
    assert layout.bibliography_bib == root.resolve() / "03_REFERENCES.bib"
    assert layout.supplementary_md == root.resolve() / "02_SUPPLEMENTARY.md"
    assert layout.figures_dir == root.resolve() / "FIGURES"


def test_discover_is_deterministic(tmp_path):
    root = make_minimal(tmp_path)
    assert discover_layout(root) == discover_layout(root)


def test_output_dir_may_not_overwrite_sources(tmp_path):
    layout = discover_layout(make_minimal(tmp_path))
    with pytest.raises(ValueError):
        layout.with_output_dir(layout.root_dir)
    with pytest.raises(ValueError):
        layout.with_output_dir(layout.main_md)
    moved = layout.with_output_dir(tmp_path / "elsewhere")
    assert moved.output_dir == tmp_path / "elsewhere"


def test_minimal_config_defaults(tmp_path):
    config = parse_config_text("title: My Manuscript\nbibliography: refs.bib\n")
    assert config.title == "My Manuscript"
    assert config.latex_engine == "pdflatex"
    assert config.strict is False
    assert config.bibliography == "refs.bib"
    assert config.authors == ()
    assert config.keywords == ()


def test_affiliation_index_out_of_range():
    text = (
        "title: T\n"
        "authors:\n"
        "  - name: A\n"
        "    affiliations: [3]\n"
        "affiliations:\n"
        "  - One\n"
        "  - Two\n"
    )
    with pytest.raises(SchemaViolation) as exc:
        parse_config_text(text)
    assert "3" in str(exc.value)


def test_fixture_config_three_authors_five_affiliations():
    config = parse_config(FIXTURE / "00_CONFIG.yml")
    assert len(config.authors) == 3
    assert len(config.affiliations) == 5
    assert config.authors[0].corresponding
    assert config.authors[1].affiliation_indices == (2, 3)
    assert config.authors[0].orcid == "0000-0002-1825-0097"


def test_bad_orcid_rejected():
    text = "title: T\nauthors:\n  - name: A\n    orcid: 12-34\n"
    with pytest.raises(SchemaViolation):
        parse_config_text(text)


def test_orcid_final_x_accepted():
    text = "title: T\nauthors:\n  - name: A\n    orcid: 0000-0002-1825-009X\n"
    config = parse_config_text(text)
    assert config.authors[0].orcid == "0000-0002-1825-009X"


def test_empty_title_rejected():
    with pytest.raises(SchemaViolation):
        parse_config_text("title: ''\n")


def test_unknown_key_warns_and_is_preserved():
    diag = Diagnostics()
    config = parse_config_text("title: T\ncustom_thing: 5\n", diagnostics=diag)
    assert any(d.code == "UnknownConfigKey" for d in diag.warnings)
    assert dict(config.extra) == {"custom_thing": 5}


def test_unknown_key_strict_raises():
    with pytest.raises(SchemaViolation):
        parse_config_text("title: T\ncustom_thing: 5\n", strict=True)


def test_yaml_syntax_error_carries_line():
    with pytest.raises(YamlSyntax) as exc:
        parse_config_text("title: T\nauthors: [unclosed\n")
    assert exc.value.line >= 1


def test_invalid_utf8_rejected(tmp_path):
    path = tmp_path / "00_CONFIG.yml"
    path.write_bytes(b"title: \xff\xfe broken\n")
    with pytest.raises(YamlSyntax):
        parse_config(path)


def test_generator_commands_configurable():
    config = parse_config_text("title: T\ngenerators:\n  python: python3.11\n")
    assert config.generators.python == "python3.11"
    assert config.generators.mermaid == "mmdc"


def test_config_round_trip():
    config = ManuscriptConfig(
        title="Round Trip",
        short_title="RT",
        authors=(
            Author(name="A", affiliation_indices=(1,), corresponding=True, orcid="0000-0002-1825-0097"),
            Author(name="B", affiliation_indices=(1, 2)),
        ),
        affiliations=(Affiliation("One"), Affiliation("Two")),
        keywords=("k1", "k2"),
        bibliography="03_REFERENCES.bib",
        latex_engine="lualatex",
        strict=True,
        generators=GeneratorCommands(python="python3.12"),
    )
    assert parse_config_text(serialize_config(config)) == config


def test_round_trip_of_fixture_config():
    config = parse_config(FIXTURE / "00_CONFIG.yml")
    assert parse_config_text(serialize_config(config)) == config
