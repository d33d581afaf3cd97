import pytest

from maxstab.forms.config import validate_run_config
from maxstab.services.errors import ConfigError, DataError
from maxstab.services.runconfig import RunConfig, load_run_config


def test_defaults_fill_every_section():
    cfg = RunConfig.from_mapping({})
    assert cfg.seed == 0
    assert cfg.model["kind"] == "brown_resnick"
    assert cfg.grid["radius"] == 128.0
    assert cfg.grid["spacing"] == 0.125
    assert cfg.simulation["mode"] == "auto"
    assert cfg.diagnostics["n_reps"] == 1000
    assert cfg.radii() is None
    assert cfg.weight() is None


def test_unknown_keys_are_reported_with_paths():
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.from_mapping({"sed": 3, "grid": {"radious": 4}})
    assert excinfo.value.fields["sed"] == ["Unknown key."]
    assert excinfo.value.fields["grid.radious"] == ["Unknown key."]
    assert excinfo.value.exit_code == 2


def test_invalid_values_are_reported():
    _, errors = validate_run_config({"seed": -1, "grid": {"spacing": 0}, "classifier": {"weight_exponent": 1.0}})
    assert "seed" in errors
    assert "grid.spacing" in errors
    assert "classifier.weight_exponent" in errors


def test_single_fold_is_rejected():
    _, errors = validate_run_config({"diagnostics": {"fold": 1}})
    assert errors["diagnostics.fold"] == ["Use 0 to skip or at least 2 fields."]
    clean, errors = validate_run_config({"diagnostics": {"fold": 2}})
    assert not errors
    assert clean["diagnostics"]["fold"] == 2
    assert clean["classifier"]["resimulate"] == 0


def test_section_must_be_a_table():
    _, errors = validate_run_config({"grid": 4})
    assert errors["grid"] == ["Must be a table."]


def test_mixture_components_are_validated():
    payload = {
        "model": {
            "kind": "mixture",
            "weights": [1.0, 1.0],
            "components": [{"kind": "constant", "c": -1.0}, {"kind": "comb", "N": 3, "colour": "red"}],
        }
    }
    _, errors = validate_run_config(payload)
    assert "model.components[0].c" in errors
    assert errors["model.components[1].colour"] == ["Unknown key."]


def test_mixture_needs_one_weight_per_component():
    _, errors = validate_run_config({"model": {"kind": "mixture", "weights": [1.0], "components": [{}, {}]}})
    assert errors["model.weights"] == ["Needs one weight per component."]


def test_model_section_keeps_only_its_keys():
    cfg = RunConfig.from_mapping({"model": {"kind": "comb"}})
    assert cfg.model == {"kind": "comb", "d": 1, "placement": "centered"}
    assert cfg.build_model().describe()["kind"] == "comb"


def test_grid_dimension_must_match_model():
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.from_mapping({"model": {"kind": "constant", "d": 2}})
    assert "grid.d" in excinfo.value.fields


def test_digest_ignores_output_dir_but_not_seed():
    base = RunConfig.from_mapping({"seed": 4})
    assert base.digest() == RunConfig.from_mapping({"seed": 4, "output_dir": "elsewhere"}).digest()
    assert base.digest() != base.with_overrides(seed=5).digest()
    assert len(base.digest()) == 64


def test_reps_override_reaches_both_sections():
    cfg = RunConfig.from_mapping({}).with_overrides(n_reps=7)
    assert cfg.simulation["n_reps"] == 7
    assert cfg.diagnostics["n_reps"] == 7
    with pytest.raises(ConfigError):
        cfg.with_overrides(seed=-2)


def test_theta_box_must_be_ordered():
    cfg = RunConfig.from_mapping({"diagnostics": {"theta_box": [1.0, 0.0]}})
    with pytest.raises(ConfigError):
        cfg.diagnostic_settings()


def test_diagnostic_settings_use_fixed_n_atoms_only_in_fixed_mode():
    auto = RunConfig.from_mapping({}).diagnostic_settings()
    fixed = RunConfig.from_mapping({"simulation": {"mode": "fixed_n", "n_atoms": 64}}).diagnostic_settings()
    assert auto.n_atoms is None
    assert fixed.n_atoms == 64


def test_toml_and_json_files_load_alike(tmp_path, write_config):
    toml = tmp_path / "run.toml"
    toml.write_text('seed = 9\n\n[model]\nkind = "compact_bump"\nshape = "parabolic"\n', encoding="utf-8")
    from_toml = load_run_config(toml)
    from_json = load_run_config(write_config({"seed": 9, "model": {"kind": "compact_bump", "shape": "parabolic"}}))
    assert from_toml.digest() == from_json.digest()


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(DataError):
        load_run_config(tmp_path / "nope.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(broken)
