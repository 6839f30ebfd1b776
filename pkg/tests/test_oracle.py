import math

import numpy as np
import pytest

from capillary_lp.cap_geometry import ScalarField, ell_field, ell_profile, make_domain
from capillary_lp.config import even_bump
from capillary_lp.curvature import CurvatureSpec, Kind
from capillary_lp.exceptions import ParameterMismatch
from capillary_lp.oracle import compare_field, compare_to_2d, solve_radial, write_profile_csv
from capillary_lp.solver import model_phi

from conftest import make_spec, solve_quiet


def _model_profile(kind, k, p, theta):
    c = CurvatureSpec(kind, k).model_value
    return lambda rho: c * ell_profile(theta, rho) ** (1.0 - p)


@pytest.mark.parametrize("kind", ["sigma_k", "quotient"])
@pytest.mark.parametrize("p", [1.5, 2.0])
def test_model_family_exact(kind, p):
    theta = math.pi / 4
    prof = solve_radial(theta, 2, 1, p, _model_profile(kind, 1, p, theta), kind=kind)
    assert prof.rho_nodes.size == 4096
    assert np.max(np.abs(prof.s_values - ell_profile(theta, prof.rho_nodes))) <= 1e-8


def test_profile_is_smooth_at_pole_and_boundary():
    theta = math.pi / 3
    prof = solve_radial(theta, 2, 1, 1.5, 1.0)
    assert abs(prof.pole_slope()) < 1e-6
    assert abs(prof.robin_defect()) < 1e-6
    # Umbilic limit: radial and tangential eigenvalues agree near the pole.
    lr, lt = prof.lambda_rad, prof.lambda_tan
    assert lr[0] == lt[0]
    assert np.max(np.abs(lr[1:4] - lt[1:4])) < 1e-6
    assert np.all(lr > 0) and np.all(lt > 0)
    assert prof(0.0) == pytest.approx(prof.s_values[0])


def test_homogeneous_profile_has_multiplier():
    prof = solve_radial(math.pi / 3, 2, 1, 2.0, 1.0)
    assert prof.multiplier > 0
    # The normalisation fixes the mean of s to that of ell.
    w = np.sin(prof.rho_nodes)
    mean_s = np.trapezoid(prof.s_values * w, prof.rho_nodes)
    mean_l = np.trapezoid(ell_profile(prof.theta, prof.rho_nodes) * w, prof.rho_nodes)
    assert mean_s == pytest.approx(mean_l, rel=1e-3)


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_matches_2d_solver(p):
    theta = math.pi / 3
    prof = solve_radial(theta, 2, 1, p, 1.0)
    d = make_domain(theta, 2, 33, 64)
    b = solve_quiet(make_spec(d, ScalarField(d, np.ones(d.shape)), p))
    assert compare_to_2d(prof, b) <= 1e-3


def test_model_family_deviation():
    theta = math.pi / 4
    prof = solve_radial(theta, 2, 1, 1.5, _model_profile("sigma_k", 1, 1.5, theta))
    d = make_domain(theta, 2, 33, 64)
    b = solve_quiet(make_spec(d, model_phi(d, CurvatureSpec(Kind.SigmaK, 1), 1.5), 1.5))
    assert compare_to_2d(prof, b) <= 1e-3


def test_deviation_decreases_under_refinement():
    theta = math.pi / 3
    prof = solve_radial(theta, 2, 1, 1.5, 1.0)
    devs = []
    for nr, nq in [(17, 32), (33, 64), (65, 128)]:
        d = make_domain(theta, 2, nr, nq)
        devs.append(compare_to_2d(prof, solve_quiet(make_spec(d, ScalarField(d, np.ones(d.shape)), 1.5))))
    assert devs[0] > devs[1] > devs[2]


def test_parameter_mismatch():
    prof = solve_radial(math.pi / 3, 2, 1, 1.5, 1.0)
    d = make_domain(math.pi / 4, 2, 17, 32)
    b = solve_quiet(make_spec(d, ScalarField(d, np.ones(d.shape)), 1.5))
    with pytest.raises(ParameterMismatch, match="parameter mismatch"):
        compare_to_2d(prof, b)
    d3 = make_domain(math.pi / 3, 2, 17, 32)
    with pytest.raises(ParameterMismatch, match="parameter mismatch: p"):
        compare_field(prof, ell_field(d3), make_spec(d3, ScalarField(d3, np.ones(d3.shape)), 1.25))
    with pytest.raises(ParameterMismatch, match="phi"):
        compare_field(prof, ell_field(d3), make_spec(d3, even_bump(d3, 0.5, 0.5), 1.5))
    with pytest.raises(ParameterMismatch, match="curvature"):
        compare_field(prof, ell_field(d3), make_spec(d3, ScalarField(d3, np.ones(d3.shape)), 1.5, "quotient"))


def test_input_validation():
    with pytest.raises(ValueError, match="2048"):
        solve_radial(math.pi / 4, 2, 1, 1.5, 1.0, n_nodes=512)
    with pytest.raises(ValueError, match="theta"):
        solve_radial(math.pi / 2, 2, 1, 1.5, 1.0)
    with pytest.raises(ValueError, match="positive"):
        solve_radial(math.pi / 4, 2, 1, 1.5, -1.0)


def test_profile_csv(tmp_path):
    prof = solve_radial(math.pi / 4, 2, 1, 1.5, 1.0)
    path = write_profile_csv(tmp_path / "p.csv", prof)
    lines = path.read_text().splitlines()
    assert lines[0] == "rho,s"
    assert len(lines) == prof.rho_nodes.size + 1
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], prof.s_values)
