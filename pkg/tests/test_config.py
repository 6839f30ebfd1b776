import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capillary_lp.cap_geometry import ScalarField, make_domain, reflect, write_field_csv
from capillary_lp.config import (
    ConfigError,
    PhiSpec,
    RunConfig,
    even_bump,
    load_config,
    parse_config,
    parse_number,
)
from capillary_lp.curvature import CurvatureSpec, Kind

# numbers


@pytest.mark.parametrize(
    "text, value",
    [("2", 2.0), ("-1.5e-3", -1.5e-3), ("pi/4", math.pi / 4), ("2*pi/3", 2 * math.pi / 3), ("(1+2)**2", 9.0)],
)
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["", "x", "1/0", "__import__('os')", "True", "1e999", "[1]", "pi()"])
def test_parse_number_rejects(text):
    with pytest.raises(ValueError):
        parse_number(text)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_parse_number_round_trips_repr(x):
    assert parse_number(repr(x)) == x


# errors carry line and key


def test_unknown_key():
    with pytest.raises(ConfigError, match=r"line 2: key 'thetta': unknown key") as info:
        parse_config("p = 2\nthetta = 0.5\n", source="a.cfg")
    assert info.value.key == "thetta"
    assert info.value.line == 2
    assert str(info.value).startswith("a.cfg:line 2")


def test_duplicate_key():
    with pytest.raises(ConfigError, match=r"line 3: key 'p': duplicate key \(first set on line 1\)"):
        parse_config("p = 2\n# comment\np = 3\n")


def test_missing_equals():
    with pytest.raises(ConfigError, match="line 1.*expected 'key = value'"):
        parse_config("theta 0.5\n")


def test_bad_value():
    with pytest.raises(ConfigError, match="line 1: key 'n_rho': not an integer"):
        parse_config("n_rho = 3.5\n")


@pytest.mark.parametrize(
    "text, key",
    [
        ("theta = pi/2", "theta"),
        ("theta = 0", "theta"),
        ("n = 3", "n"),
        ("k = 2", "k"),
        ("n_rho = 4", "n_rho"),
        ("n_phi = 33", "n_phi"),
        ("newton_tol = 0", "newton_tol"),
        ("max_newton_iters = 0", "max_newton_iters"),
        ("scale = -1", "scale"),
        ("oracle_nodes = 100", "oracle_nodes"),
        ("run_id = a/b", "run_id"),
        ("p = 2\ngamma = 2", "gamma"),
        ("p = 2\ngamma = 0", "gamma"),
        ("gamma_fraction = 1", "gamma_fraction"),
        ("curvature = sigma", "curvature"),
        ("sweep.p = 1", "sweep.p"),
        ("sweep.theta = 2", "sweep.theta"),
        ("sweep.grid = 64", "sweep.grid"),
        ("sweep.grid = 8x9", "sweep.grid"),
        ("sweep.gamma_fraction = 0", "sweep.gamma_fraction"),
        ("phi = wobble", "phi"),
        ("phi = constant:-1", "phi"),
        ("phi = even-bump:-1,0.5", "phi"),
        ("phi = even-bump:0.5", "phi"),
        ("phi = model:2", "phi"),
        ("phi = file:/no/such/file.csv", "phi"),
    ],
)
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError, match=f"key '{key}'"):
        parse_config(text + "\n")


def test_validation_error_line_points_at_key():
    with pytest.raises(ConfigError, match="line 3: key 'gamma'"):
        parse_config("theta = pi/3\np = 1.5\ngamma = 1.1\n")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "absent.cfg")


# defaults and derived values


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.theta == pytest.approx(math.pi / 4)
    assert cfg.gammas == (1.0,)
    assert cfg.curvature_spec == CurvatureSpec(Kind.SigmaK, 1, 2)


def test_gammas_combines_absolute_and_fractions():
    cfg = parse_config("p = 1.5\ngamma = 0.2, 0.4\ngamma_fraction = 0.5\n")
    assert cfg.gammas == pytest.approx((0.2, 0.4, 0.5))


def test_no_default_gamma_for_p_le_one():
    assert parse_config("p = 0.5\n").gammas == ()


def test_paths_and_overrides(tmp_path):
    cfg = parse_config(f"out = {tmp_path}\nrun_id = abc\n")
    assert cfg.path("field.csv") == tmp_path / "abc.field.csv"
    other = cfg.with_overrides(run_id="xyz")
    assert other.path("mesh") == tmp_path / "xyz.mesh"
    with pytest.raises(ConfigError):
        cfg.with_overrides(run_id="..")


def test_problem_key_ignores_output_settings():
    a = parse_config("p = 1.5\nrun_id = a\n")
    b = parse_config("p = 1.5\nrun_id = b\ngamma = 0.1\n")
    c = parse_config("p = 1.6\n")
    assert a.problem_key() == b.problem_key() != c.problem_key()


# canonical text


def test_to_text_round_trip():
    text = (
        "theta = pi/3\np = 1.5\ncurvature = quotient\nphi = even-bump:0.5,0.25\n"
        "n_rho = 17\nn_phi = 32\nscale = 2\ngamma = 0.1\ngamma_fraction = 0.3, 0.6\n"
        "sweep.theta = pi/6, pi/4\nsweep.p = 1.5, 2\nsweep.phi = model; constant:2; even-bump:1,0.3\n"
        "sweep.grid = 17x32, 33x64\nsweep.gamma_fraction = 0.3\n"
    )
    cfg = parse_config(text)
    again = parse_config(cfg.to_text())
    assert again == cfg
    assert again.to_text() == cfg.to_text()


def test_sweep_keys():
    cfg = parse_config("sweep.phi = model ; even-bump:0.5,0.5\nsweep.grid = 33x64, 65x128\n")
    assert [str(p) for p in cfg.sweep_phi] == ["model", "even-bump:0.5,0.5"]
    assert cfg.sweep_grid == ((33, 64), (65, 128))
    assert cfg.sweep_theta is None


def test_empty_gamma_list():
    assert parse_config("gamma =\n").gamma == ()


# phi specifications


def test_phi_str_round_trip():
    for text in ("model", "constant:2.5", "even-bump:0.5,0.25"):
        assert str(PhiSpec.parse(text)) == text


def test_phi_axisymmetric_flag():
    assert PhiSpec.parse("model").axisymmetric
    assert PhiSpec.parse("constant:1").axisymmetric
    assert not PhiSpec.parse("even-bump:1,1").axisymmetric


def test_even_bump_is_even_positive_and_not_axisymmetric():
    d = make_domain(math.pi / 4, 2, 17, 32)
    f = even_bump(d, 0.5, 0.5)
    assert np.max(np.abs(f.values - reflect(d, f).values)) == 0.0
    assert f.min() > 0.0
    assert np.ptp(f.values[-1]) > 0.1
    # On the boundary at phi = 0, a = 1 and b = 0.
    assert f.values[-1, 0] == pytest.approx(1.5, rel=1e-12)
    assert f.values[0, 0] == 1.0


def test_even_bump_negative_amplitude_stays_positive():
    d = make_domain(math.pi / 3, 2, 17, 32)
    assert even_bump(d, -0.99, 2.0).min() > 0.0


def test_constant_phi_build():
    d = make_domain(math.pi / 4, 2, 9, 16)
    f = PhiSpec.parse("constant:3").build(d, CurvatureSpec(Kind.SigmaK, 1), 1.5)
    assert np.all(f.values == 3.0)


def test_profile_only_for_axisymmetric():
    cs = CurvatureSpec(Kind.SigmaK, 1)
    assert PhiSpec.parse("constant:2").profile(0.5, cs, 1.5) == 2.0
    with pytest.raises(ValueError, match="not rotationally symmetric"):
        PhiSpec.parse("even-bump:1,1").profile(0.5, cs, 1.5)


def test_model_profile_matches_model_field():
    d = make_domain(math.pi / 3, 2, 17, 32)
    cs = CurvatureSpec(Kind.SigmaK, 1)
    spec = PhiSpec.parse("model")
    f = spec.build(d, cs, 1.5, 2.0)
    prof = spec.profile(d.theta, cs, 1.5, 2.0)
    assert f.values[:, 0] == pytest.approx(prof(d.grid.rho_values), rel=1e-13)


@pytest.fixture
def phi_files(tmp_path):
    d = make_domain(math.pi / 4, 2, 9, 16)
    good = even_bump(d, 0.5, 0.5)
    write_field_csv(tmp_path / "good.csv", good)
    phi = d.grid.phi_values[None, :]
    write_field_csv(tmp_path / "odd.csv", ScalarField(d, good.values + 0.1 * np.sin(d.grid.rho_values[:, None]) * np.cos(phi)))
    write_field_csv(tmp_path / "neg.csv", ScalarField(d, good.values - 2.0))
    return d, good, tmp_path


def test_file_phi_relative_to_config(phi_files):
    d, good, tmp = phi_files
    cfg_path = tmp / "run.cfg"
    cfg_path.write_text("n_rho = 9\nn_phi = 16\nphi = file:good.csv\n")
    cfg = load_config(cfg_path)
    assert cfg.phi.path == str((tmp / "good.csv").resolve())
    f = cfg.phi.build(cfg.domain(), cfg.curvature_spec, cfg.p)
    assert np.max(np.abs(f.values - good.values)) <= 1e-15


@pytest.mark.parametrize("name, match", [("odd.csv", "not even"), ("neg.csv", "positive")])
def test_file_phi_rejects(phi_files, name, match):
    d, _, tmp = phi_files
    with pytest.raises(ValueError, match=match):
        PhiSpec.parse(f"file:{name}", tmp).build(d, CurvatureSpec(Kind.SigmaK, 1), 2.0)


def test_file_phi_wrong_grid(phi_files):
    _, _, tmp = phi_files
    d = make_domain(math.pi / 4, 2, 17, 32)
    with pytest.raises(ValueError, match="rows but the grid"):
        PhiSpec.parse("file:good.csv", tmp).build(d, CurvatureSpec(Kind.SigmaK, 1), 2.0)
