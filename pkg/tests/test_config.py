import math

import pytest

from mobicell.config import (ConfigError, bundled_scenario_path, load_scenario,
                             parse_angle)


def test_bundled_scenario_loads():
    cfg = load_scenario(bundled_scenario_path())
    assert cfg.traffic.lambda_tot == 7.0
    assert cfg.spec.theta_h == pytest.approx(math.pi / 3)
    assert cfg.K == 4 and cfg.L == 4
    assert cfg.policy.route is not None
    # cruise speed derived from route length over the pass period
    assert cfg.policy.initial_speed == pytest.approx(1.5 / 1800.0 * 3600.0)
    assert len(cfg.scenario_id) == 12


def test_scenario_id_stable_under_reload():
    a = load_scenario(bundled_scenario_path())
    b = load_scenario(bundled_scenario_path())
    assert a.scenario_id == b.scenario_id


def test_parse_angle_forms():
    assert parse_angle("pi/3") == pytest.approx(math.pi / 3)
    assert parse_angle("2*pi/5") == pytest.approx(2 * math.pi / 5)
    assert parse_angle("-pi") == pytest.approx(-math.pi)
    assert parse_angle("0.75") == 0.75
    assert parse_angle("1.5 * pi") == pytest.approx(1.5 * math.pi)


def write_scenario(tmp_path, extra=""):
    text = "[traffic]\nlambda_tot = 5\n" + extra
    p = tmp_path / "s.ini"
    p.write_text(text)
    return p


def test_defaults_fill_missing_sections(tmp_path):
    cfg = load_scenario(write_scenario(tmp_path))
    assert cfg.traffic.lambda_tot == 5.0
    assert cfg.layout.delta == 1.0


def test_unknown_keys_rejected(tmp_path):
    p = write_scenario(tmp_path, "[radio]\nbogus_key = 1\n[nonsense]\nx = 2\n")
    with pytest.raises(ConfigError) as err:
        load_scenario(p)
    msgs = "\n".join(err.value.errors)
    assert "bogus_key" in msgs
    assert "nonsense" in msgs


def test_all_errors_collected(tmp_path):
    p = write_scenario(tmp_path, "[hotspot]\nsigma_km = -1\n[classes]\nk_macro = 0\n"
                                 "[sim]\nsnapshot_s = -5\n")
    with pytest.raises(ConfigError) as err:
        load_scenario(p)
    assert len(err.value.errors) >= 3


def test_hotspot_must_sit_inside_macro_disk(tmp_path):
    p = write_scenario(tmp_path, "[hotspot]\ncenter_r_km = 0.6\n")
    with pytest.raises(ConfigError) as err:
        load_scenario(p)
    assert any("macro disk" in e for e in err.value.errors)


def test_route_reach_domain_guard(tmp_path):
    p = write_scenario(tmp_path, "[sim]\nsmall_reach_km = 0.4\n"
                                 "[mobility]\nroute = 0.25,0.25; 0.25,0.75; 0.0,0.75; 0.0,0.25\n")
    with pytest.raises(ConfigError) as err:
        load_scenario(p)
    assert any("interference model" in e for e in err.value.errors)


def test_stops_parsing(tmp_path):
    p = write_scenario(tmp_path, "[mobility]\nroute = 0.25,0.25; 0.25,0.75; 0.0,0.75; 0.0,0.25\n"
                                 "stops = 0.25,0.5,60\n")
    cfg = load_scenario(p)
    assert cfg.policy.stops == (((0.25, 0.5), 60.0),)


def test_missing_bundled_scenario():
    with pytest.raises(FileNotFoundError):
        bundled_scenario_path("nope")
