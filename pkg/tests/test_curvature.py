import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capillary_lp.cap_geometry import ell_field, make_domain
from capillary_lp.curvature import (
    CurvatureSpec,
    F_derivative,
    F_value,
    Kind,
    admissibility,
    contract,
    elementary_symmetric,
)
from capillary_lp.discrete_calculus import SymTensorField, tau
from capillary_lp.exceptions import NonAdmissible

SIGMA = CurvatureSpec(Kind.SigmaK, 1)
QUOT = CurvatureSpec(Kind.QuotientSigma, 1)


def _random_spd(rng, m):
    lam = rng.uniform(0.1, 10.0, size=(m, 2))
    ang = rng.uniform(0, math.pi, size=m)
    c, s = np.cos(ang), np.sin(ang)
    t11 = lam[:, 0] * c * c + lam[:, 1] * s * s
    t22 = lam[:, 0] * s * s + lam[:, 1] * c * c
    t12 = (lam[:, 0] - lam[:, 1]) * c * s
    return np.stack([t11, t12, t22], axis=-1), lam


def test_sigma_hand_values():
    tau_ = np.diag([2.0, 3.0])
    assert F_value(SIGMA, tau_) == pytest.approx(5.0)
    assert elementary_symmetric([2.0, 3.0], 2) == pytest.approx(6.0)
    assert F_value(QUOT, tau_) == pytest.approx(1.2)


def test_model_values():
    # F at the identity: sigma_1 = 2 and sigma_2 / sigma_1 = 1 / 2.
    assert F_value(SIGMA, np.eye(2)) == pytest.approx(2.0)
    assert SIGMA.model_value == 2.0
    assert F_value(QUOT, np.eye(2)) == pytest.approx(QUOT.model_value)
    assert QUOT.model_value == 0.5


def test_elementary_symmetric_edges():
    assert elementary_symmetric([1.0, 2.0], 0) == 1.0
    assert elementary_symmetric([1.0, 2.0], 3) == 0.0
    assert elementary_symmetric([1.0, 2.0, 3.0], 2) == pytest.approx(11.0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6))
@settings(max_examples=50, deadline=None)
def test_elementary_symmetric_generating_function(lam):
    # prod (1 + t x_i) = sum_k sigma_k t^k, checked at t = 0.5.
    t = 0.5
    lhs = float(np.prod([1 + t * x for x in lam]))
    rhs = sum(elementary_symmetric(lam, k) * t**k for k in range(len(lam) + 1))
    assert rhs == pytest.approx(lhs, rel=1e-9, abs=1e-9)


def test_spec_validation():
    with pytest.raises(ValueError):
        CurvatureSpec(Kind.SigmaK, 2)
    with pytest.raises(ValueError):
        CurvatureSpec("nonsense", 1)
    assert CurvatureSpec("quotient", 1).kind is Kind.QuotientSigma


def test_sigma_derivative_is_identity(rng):
    t, _ = _random_spd(rng, 20)
    d = F_derivative(SIGMA, t)
    assert np.array_equal(d, np.tile([1.0, 0.0, 1.0], (20, 1)))


@pytest.mark.parametrize("spec", [SIGMA, QUOT], ids=["sigma_k", "quotient"])
def test_euler_relation_random(spec, rng):
    t, _ = _random_spd(rng, 100)
    lhs = contract(F_derivative(spec, t), t)
    rhs = spec.k * F_value(spec, t)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@pytest.mark.parametrize("spec", [SIGMA, QUOT], ids=["sigma_k", "quotient"])
@pytest.mark.parametrize("scale", [0.3, 1.0, 4.0])
def test_euler_relation_scalar_multiple(spec, scale):
    t = scale * np.array([1.0, 0.0, 1.0])
    assert contract(F_derivative(spec, t), t) == pytest.approx(spec.k * F_value(spec, t), abs=1e-14)


@pytest.mark.parametrize("spec", [SIGMA, QUOT], ids=["sigma_k", "quotient"])
def test_derivative_central_difference(spec, rng):
    t, _ = _random_spd(rng, 50)
    e = rng.standard_normal((50, 3))
    errs = []
    for eps in (1e-3, 5e-4):
        fd = (F_value(spec, t + eps * e) - F_value(spec, t - eps * e)) / (2 * eps)
        errs.append(np.max(np.abs(fd - contract(F_derivative(spec, t), e))))
    assert errs[0] < 1e-5
    # Quadratic in eps, unless already at roundoff.
    assert errs[1] < 0.3 * errs[0] or errs[1] < 1e-10


def test_quotient_rejects_indefinite():
    with pytest.raises(NonAdmissible):
        F_value(QUOT, np.array([1.0, 0.0, -0.5]))
    with pytest.raises(NonAdmissible):
        F_derivative(QUOT, np.array([1.0, 0.0, -0.5]))
    # sigma_1 only needs a positive trace.
    assert F_value(SIGMA, np.array([1.0, 0.0, -0.5])) == pytest.approx(0.5)
    with pytest.raises(NonAdmissible):
        F_value(SIGMA, np.array([-1.0, 0.0, -0.5]))


def test_admissibility_of_ell():
    d = make_domain(math.pi / 4, 2, 33, 64)
    rep = admissibility(SIGMA, tau(ell_field(d)))
    assert rep.strictly_convex
    assert rep.min_eigenvalue == pytest.approx(1.0, abs=1e-3)
    rep2 = admissibility(SIGMA, tau(d.field(2.5 * ell_field(d).values)))
    assert rep2.min_eigenvalue == pytest.approx(2.5 * rep.min_eigenvalue, rel=1e-9)


def test_admissibility_flags_negative_eigenvalue():
    d = make_domain(math.pi / 4, 2, 17, 32)
    t11 = np.ones(d.shape)
    t11[5, 7] = -0.1
    rep = admissibility(SIGMA, SymTensorField(d, t11, np.zeros(d.shape), np.ones(d.shape)))
    assert not rep.strictly_convex
    assert rep.min_eigenvalue == pytest.approx(-0.1)
    assert rep.argmin == (5, 7)
