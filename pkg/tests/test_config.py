"""Configuration document: schema strictness, units, overrides, diagnostics."""
import copy

import pytest

from romram.config import (
    ConfigError,
    apply_override,
    load_config,
    load_document,
    parse_document,
    validate_config,
)

from conftest import DEFAULT_CONFIG


@pytest.fixture
def document():
    return load_document(DEFAULT_CONFIG)


def test_default_document_validates(document):
    config = validate_config(copy.deepcopy(document))
    assert config.sim.vdd == pytest.approx(0.8)
    assert config.device.vt_high == pytest.approx(0.65)
    assert config.mc.min_margin == pytest.approx(0.010)
    assert config.variation.sigma_vt == pytest.approx(0.025)


def test_all_modes_buildable(run_config, cfg, params):
    modes = run_config.mode_configs()
    assert set(modes) == {"rom_only", "ram_only_reliability", "ram_only_delay", "dual_context"}
    for mode_cfg in modes.values():
        mode_cfg.validate(cfg, params)


def test_unknown_keys_rejected(document):
    doc = copy.deepcopy(document)
    doc["sim"]["mystery_knob"] = 3
    with pytest.raises(ConfigError, match="mystery_knob"):
        validate_config(doc)


def test_bare_numbers_rejected(document):
    doc = copy.deepcopy(document)
    doc["sim"]["vdd"] = 0.8
    with pytest.raises(ConfigError, match="explicit unit"):
        validate_config(doc)


def test_wrong_dimension_rejected(document):
    doc = copy.deepcopy(document)
    doc["sim"]["dt_max"] = "250 mV"
    with pytest.raises(ConfigError, match="dt_max"):
        validate_config(doc)


def test_yaml_errors_carry_line_numbers(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("sim:\n  vdd: '0.8 V'\n bad_indent: 1\n")
    with pytest.raises(ConfigError, match=r"bad\.yaml:3"):
        load_config(bad)


def test_override_scalar_leaf(document):
    doc = copy.deepcopy(document)
    apply_override(doc, "sim.dt_max", "5 ps")
    config = validate_config(doc)
    assert config.sim.dt_max == pytest.approx(5e-12)


def test_override_bad_path(document):
    doc = copy.deepcopy(document)
    with pytest.raises(ConfigError, match="no section"):
        apply_override(doc, "simulation.dt_max", "5 ps")


def test_override_numeric_leaf(document):
    doc = copy.deepcopy(document)
    config = validate_config(doc, overrides={"mc.samples_per_case": "100"})
    assert config.mc.samples_per_case == 100


def test_mode_invariants_enforced_on_build(document):
    doc = copy.deepcopy(document)
    doc["modes"]["rom_only"]["phase1"]["vsl"] = "0.1 V"
    config = validate_config(doc)
    from romram.protocol import ProtocolError

    with pytest.raises(ProtocolError):
        config.mode_config("rom_only")


def test_parse_document_top_level_shape():
    with pytest.raises(ConfigError, match="mapping"):
        parse_document("- 1\n- 2\n")
    assert parse_document("") == {}


def test_unknown_mode_name(run_config):
    with pytest.raises(ConfigError, match="unknown mode"):
        run_config.mode_config("turbo")


def test_build_memory_array_default_checkerboard(run_config):
    arr = run_config.build_memory_array()
    assert arr.config.rows == 8 and arr.config.cols == 8
    assert int(arr.rom.bits.sum()) == 32  # half the 64 cells are low-Vt


def test_build_memory_array_from_file(document, tmp_path):
    doc = copy.deepcopy(document)
    image = tmp_path / "image.rom"
    image.write_text("11110000\n" * 8)
    doc["array"]["rom_image"] = "image.rom"
    config = validate_config(doc)
    arr = config.build_memory_array(base_path=tmp_path)
    assert list(arr.rom.bits[0]) == [1, 1, 1, 1, 0, 0, 0, 0]
