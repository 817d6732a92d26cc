from dataclasses import replace

import pytest

from camforge.config import (ExperimentConfig, ParamConfig, base_design, build_space, emit_config, load_config,
                             mono_preset, parse_config, scene_spec, stereo_preset, validate)
from camforge.errors import ConfigError
from camforge.optimize.space import Scheme


@pytest.mark.parametrize("cfg", [stereo_preset(3), mono_preset("night", 2, "discrete"), mono_preset("day")])
def test_emit_parse_round_trip(cfg):
    assert parse_config(emit_config(cfg)) == cfg
    assert emit_config(parse_config(emit_config(cfg))) == emit_config(cfg)


def test_scenarios_set_light_and_gain():
    day, night = mono_preset("day"), mono_preset("night")
    assert (day.illuminance_lux, day.gain_db) == (20.0, 5.0)
    assert (night.illuminance_lux, night.gain_db) == (2.0, 15.0)
    assert base_design(night).gain_db == 15.0
    assert scene_spec(night).illuminance_lux == 2.0


def test_scene_seed_defaults_to_master_seed():
    assert scene_spec(mono_preset("day", 7)).seed == 7
    cfg = mono_preset("day", 7)
    assert scene_spec(replace(cfg, scene=replace(cfg.scene, seed=1))).seed == 1


def test_seed_applies_to_ga():
    text = emit_config(stereo_preset(0)).replace("master_seed = 0", "master_seed = 42")
    assert parse_config(text).ga.master_seed == 42


def test_build_space_scheme_override():
    cfg = mono_preset("day", 0, "quantized")
    assert build_space(cfg).sensor_param().scheme is Scheme.QUANTIZED
    assert build_space(cfg, "discrete").sensor_param().scheme is Scheme.FULLY_DISCRETE


@pytest.mark.parametrize("text, needle", [
    ("[experiment]\nbogus = 1\n", "bogus"),
    ("[nope]\n", "nope"),
    ("[ga]\npop_size = many\n", "pop_size"),
    ("[ga]\npop_size = 2\nn_parents = 3\n", "ga"),
    ("[params.x]\nlo = 1\n", "kind"),
    ("[params.x]\nkind = continuous\nstep = 1\n", "step"),
    ("[experiment\n", "config"),
])
def test_parse_errors(text, needle):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert needle in str(e.value)


def test_validate_errors(tmp_path):
    ok = stereo_preset()
    validate(ok)
    bad = [replace(ok, experiment="x"), replace(ok, scenario="dusk"), replace(ok, workers=0), replace(ok, params=()),
           replace(ok, camera=replace(ok.camera, n_cameras=1)),
           replace(ok, params=(ParamConfig("hfov_deg", "continuous", 5.0, 1.0),)),
           replace(ok, params=(ParamConfig("s", "sensor", scheme="fuzzy"),))]
    for cfg in bad:
        with pytest.raises(ConfigError):
            validate(cfg)
    missing = str(tmp_path / "none.csv")
    with pytest.raises(ConfigError) as e:
        validate(replace(mono_preset(), catalog_path=missing))
    assert missing in str(e.value)
    with pytest.raises(ConfigError) as e:
        validate(replace(ok, noise_model_path=missing))
    assert "noise model" in str(e.value)


def test_load_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    p = tmp_path / "c.ini"
    p.write_text(emit_config(mono_preset("night", 4)))
    assert load_config(p) == mono_preset("night", 4)


def test_defaults_are_a_valid_shape():
    assert ExperimentConfig().params == ()
