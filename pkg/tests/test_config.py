import pytest
import yaml

from adapcomfl.config import (
    ConfigError,
    ExperimentConfig,
    dump_config,
    from_dict,
    load_config,
)


def test_empty_config_is_reference_setup(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == ExperimentConfig()
    assert (cfg.clients, cfg.link.deadline_s, cfg.link.snr) == (7, 0.5, 3.0)
    assert (cfg.sketch.row_min, cfg.sketch.row_max, cfg.sketch.cv_threshold, cfg.sketch.fixed_rows) == (3, 10, 0.5, 7)


def test_config_roundtrip_fixed_point():
    cfg = from_dict({"seed": 9, "sketch": {"columns": 32}, "traces": {"path": "x.csv"}})
    again = from_dict(yaml.safe_load(dump_config(cfg)))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_config_errors_name_fields():
    with pytest.raises(ConfigError) as exc:
        from_dict({"rounds": 0, "sketch": {"row_min": 5, "row_max": 4}, "bogus": 1})
    assert "bogus: unknown field" in exc.value.errors
    with pytest.raises(ConfigError) as exc:
        from_dict({"rounds": 0, "sketch": {"row_min": 5, "row_max": 4}})
    text = " ".join(exc.value.errors)
    assert "rounds" in text and "sketch.row_max" in text


def test_exponent_strings_are_numbers():
    assert from_dict({"traces": {"base_bw": "2e-3"}}).traces.base_bw == 0.002


def test_empty_mapping_and_none_agree():
    assert from_dict({}) == from_dict(None) == ExperimentConfig()


def test_bad_yaml_is_config_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("rounds: [1,\n")
    with pytest.raises(ConfigError):
        load_config(path)
