"""Config schema validation: unknown keys, types, model construction."""

import numpy as np
import pytest
import yaml

from stochcycle.config import load_config, validate_config
from stochcycle.errors import ConfigError


def _base(**overrides):
    cfg = {
        "schema_version": 1,
        "analysis": "validate",
        "model": {"name": "hopf", "params": {"omega": 1.0}},
    }
    cfg.update(overrides)
    return cfg


def test_minimal_config_fills_defaults():
    cfg = validate_config(_base())
    assert cfg.analysis == "validate"
    assert cfg.epsilon == 1e-3
    assert cfg.cycle["N"] == 1024
    assert cfg.montecarlo["seed"] == 12345
    assert cfg.output["directory"] == "stochcycle_out"
    assert cfg.model.name == "hopf"


def test_unknown_top_level_key():
    with pytest.raises(ConfigError) as exc:
        validate_config(_base(no_such_key=1))
    assert "no_such_key" in str(exc.value)


def test_unknown_nested_key_reports_dotted_path():
    bad = _base()
    bad["cycle"] = {"N": 256, "turbo": True}
    with pytest.raises(ConfigError) as exc:
        validate_config(bad)
    assert "cycle.turbo" in str(exc.value)


def test_type_mismatch_rejected():
    bad = _base()
    bad["cycle"] = {"N": "many"}
    with pytest.raises(ConfigError) as exc:
        validate_config(bad)
    assert "cycle.N" in str(exc.value)


def test_bool_is_not_an_int():
    bad = _base()
    bad["montecarlo"] = {"M": True}
    with pytest.raises(ConfigError):
        validate_config(bad)


def test_positive_checks():
    bad = _base(epsilon=-0.5)
    with pytest.raises(ConfigError):
        validate_config(bad)
    bad2 = _base()
    bad2["cycle"] = {"N": 0}
    with pytest.raises(ConfigError):
        validate_config(bad2)


def test_schema_version_required_and_checked():
    cfg = _base()
    del cfg["schema_version"]
    with pytest.raises(ConfigError):
        validate_config(cfg)
    with pytest.raises(ConfigError):
        validate_config(_base(schema_version=2))


def test_unknown_analysis():
    with pytest.raises(ConfigError) as exc:
        validate_config(_base(analysis="frobnicate"))
    assert "frobnicate" in str(exc.value)


def test_model_required_for_model_analyses():
    cfg = {"schema_version": 1, "analysis": "cycle-report"}
    with pytest.raises(ConfigError):
        validate_config(cfg)
    # laplace-check runs without any model section
    validate_config({"schema_version": 1, "analysis": "laplace-check"})


def test_polynomial_model_built_from_config():
    cfg = {
        "schema_version": 1,
        "analysis": "validate",
        "model": {
            "polynomial": {
                "dim": 1,
                "components": [[[-1.0, [1]], [1.0, [2]]]],
            }
        },
    }
    rc = validate_config(cfg)
    assert rc.model.dim == 1
    np.testing.assert_allclose(rc.model.drift(np.array([0.5])), [-0.25])


def test_name_and_polynomial_are_exclusive():
    cfg = _base()
    cfg["model"]["polynomial"] = {"dim": 1, "components": [[[1.0, [1]]]]}
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_diffusion_must_be_square():
    cfg = _base()
    cfg["model"]["diffusion"] = [[1.0, 0.0]]
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_asymmetric_diffusion_is_config_error():
    cfg = _base()
    cfg["model"]["diffusion"] = [[1.0, 0.5], [0.2, 1.0]]
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_load_config_yaml_roundtrip(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(_base()))
    cfg = load_config(path)
    assert cfg.model.name == "hopf"


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_load_config_invalid_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema_version: [unclosed")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_non_mapping_root(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(path)
