"""Configuration parsing, validation, overrides, and serialization."""
import pytest

from rfp.config import (ConfigError, RunConfig, apply_overrides, load_config,
                        parse_config, serialize_config)

MINIMAL = """
# smallest useful run description
run.t_final = 1.0
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.t_final == 1.0
    assert cfg.p_min == 0.3 and cfg.p_max == 60.0
    assert cfg.n_p == 48 and cfg.n_xi == 8
    assert cfg.advection == "muscl" and cfg.limiter == "vanleer"
    assert cfg.integrator == "esdirk2"
    assert cfg.amr.indicator == "ldr"
    assert cfg.amr.chi_min == 0.1 and cfg.amr.chi_max == 1.0


def test_t_final_required():
    with pytest.raises(ConfigError):
        parse_config("domain.p_min = 0.3\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL + "run.t_finale = 2.0\n")


def test_malformed_line_reports_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("run.t_final = 1.0\nthis is not a key value pair\n")


def test_bad_value_type():
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("run.t_final = soon\n")


def test_threshold_ordering_validated():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "amr.chi_min = 0.5\namr.chi_max = 0.1\n")


def test_mms_forbids_knock_on():
    text = MINIMAL + "bc.mode = mms\nparams.knock_on = true\n"
    with pytest.raises(ConfigError, match="knock-on"):
        parse_config(text)


def test_physical_runs_require_full_pitch_range():
    text = MINIMAL + "domain.xi_min = -0.5\n"
    with pytest.raises(ConfigError):
        parse_config(text)


def test_solver_and_amr_sections():
    text = MINIMAL + """
solver.newton_rtol = 1e-8
solver.precond = jacobi
amr.n_adapt = 16
amr.indicator = lgs
"""
    cfg = parse_config(text)
    assert cfg.solver.newton_rtol == 1e-8
    assert cfg.solver.precond == "jacobi"
    assert cfg.amr.n_adapt == 16
    assert cfg.amr.indicator == "lgs"


def test_bool_parsing():
    for raw, want in (("true", True), ("YES", True), ("1", True),
                      ("false", False), ("off", False)):
        cfg = parse_config(MINIMAL + f"params.knock_on = {raw}\n")
        assert cfg.knock_on is want


def test_serialize_round_trip():
    text = MINIMAL + """
params.E = 0.5
params.alpha = 0.1
scheme.advection = quick
amr.chi_max = 0.8
solver.step_rtol = 1e-4
"""
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_apply_overrides():
    cfg = parse_config(MINIMAL)
    new = apply_overrides(cfg, ["params.E=0.7", "amr.n_pred=4"])
    assert new.E == 0.7
    assert new.amr.n_pred == 4
    assert cfg.E == 0.0  # original untouched
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["no.such.key=1"])


def test_params_mapping_for_mms():
    cfg = parse_config(MINIMAL + "bc.mode = mms\nmms.solution = sin_exp\n"
                       "mms.epsilon = 0.05\nparams.E = 0.5\n")
    params = cfg.params()
    assert params.collision_model == "constant"
    assert params.epsilon == 0.05
    assert params.alpha == 0.0
    cfg2 = parse_config(MINIMAL + "bc.mode = mms\nmms.solution = sin\n")
    assert cfg2.params().collision_model == "off"


def test_level_setups_and_rf_values():
    cfg = parse_config(MINIMAL + "mms.levels = 2-4,3-5\n"
                       "prediction.rf_list = 32,16\n")
    assert cfg.level_setups() == [(2, 4), (3, 5)]
    assert cfg.rf_values() == [32, 16]
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "mms.levels = 2:4\n")
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "prediction.rf_list = eight\n")


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(MINIMAL)
    cfg = load_config(path)
    assert cfg == parse_config(MINIMAL)
