"""Curvature functions of the symmetric tensor ``tau``.

Two families are supported, both ``k``-homogeneous:

* ``SigmaK``: ``F = sigma_k(lambda)``, the elementary symmetric function of
  the principal radii.
* ``QuotientSigma``: ``F = sigma_n(lambda) / sigma_{n-k}(lambda)``.  Since
  ``S_k(kappa) = sigma_{n-k}(lambda) / sigma_n(lambda)`` for principal
  curvatures ``kappa = 1 / lambda``, the equation ``F(tau) = s^(p-1) phi`` is
  the same as ``phi s^(p-1) S_k = 1`` on the hypersurface.

Tensors are passed as arrays of frame components ``(..., 3)`` holding
``(t11, t12, t22)``, so the functions act on whole fields at once.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .discrete_calculus import SymTensorField
from .exceptions import NonAdmissible

__all__ = [
    "Kind",
    "CurvatureSpec",
    "AdmissibilityReport",
    "elementary_symmetric",
    "F_value",
    "F_derivative",
    "admissibility",
]


class Kind(str, enum.Enum):
    SigmaK = "sigma_k"
    QuotientSigma = "quotient"


@dataclass(frozen=True)
class CurvatureSpec:
    """Choice of curvature function; with ``n = 2`` the order is ``k = 1``."""

    kind: Kind
    k: int
    n: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not (1 <= self.k < self.n):
            raise ValueError(f"need 1 <= k < n, got k = {self.k}, n = {self.n}")
        if self.n != 2:
            raise ValueError("only n = 2 is implemented")

    @property
    def degree(self) -> int:
        """Homogeneity degree of ``F``."""
        return self.k

    @property
    def model_value(self) -> float:
        """``F`` at the identity, i.e. on the model cap where ``tau = g``."""
        if self.kind is Kind.SigmaK:
            return float(comb(self.n, self.k))
        return 1.0 / comb(self.n, self.n - self.k)


@dataclass(frozen=True)
class AdmissibilityReport:
    min_eigenvalue: float
    strictly_convex: bool
    argmin: tuple[int, int]


def elementary_symmetric(eigenvalues, k: int) -> float:
    """``sigma_k`` of a list of eigenvalues (any length)."""
    lam = list(eigenvalues)
    if k == 0:
        return 1.0
    if k > len(lam):
        return 0.0
    return float(sum(np.prod(c) for c in itertools.combinations(lam, k)))


def _unpack(tau):
    if isinstance(tau, SymTensorField):
        return tau.t11, tau.t12, tau.t22
    a = np.asarray(tau, dtype=float)
    if a.shape[-2:] == (2, 2):
        return a[..., 0, 0], 0.5 * (a[..., 0, 1] + a[..., 1, 0]), a[..., 1, 1]
    return a[..., 0], a[..., 1], a[..., 2]


def _check_cone(spec: CurvatureSpec, s1, s2):
    if spec.kind is Kind.SigmaK:
        bad = s1 <= 0
    else:
        bad = (s1 <= 0) | (s2 <= 0)
    if np.any(bad):
        raise NonAdmissible(
            f"tau left the admissible cone of {spec.kind.value} at {int(np.count_nonzero(bad))} node(s)"
        )


def F_value(spec: CurvatureSpec, tau, check: bool = True) -> np.ndarray:
    """Evaluate ``F`` on one tensor or an array of tensors."""
    t11, t12, t22 = _unpack(tau)
    s1 = t11 + t22
    s2 = t11 * t22 - t12 * t12
    if check:
        _check_cone(spec, s1, s2)
    if spec.kind is Kind.SigmaK:
        return s1
    return s2 / s1


def F_derivative(spec: CurvatureSpec, tau, check: bool = True) -> np.ndarray:
    """``F^{ij} = dF / d tau_ij`` as components ``(..., 3) = (F11, F12, F22)``.

    The contraction with a symmetric ``E`` is ``F11 E11 + 2 F12 E12 + F22 E22``.
    """
    t11, t12, t22 = _unpack(tau)
    s1 = t11 + t22
    s2 = t11 * t22 - t12 * t12
    if check:
        _check_cone(spec, s1, s2)
    if spec.kind is Kind.SigmaK:
        one = np.ones_like(s1)
        return np.stack([one, 0.0 * one, one], axis=-1)
    # d sigma_2 is the cofactor matrix, d sigma_1 the identity.
    q = s2 / (s1 * s1)
    return np.stack([t22 / s1 - q, -t12 / s1, t11 / s1 - q], axis=-1)


def contract(dF: np.ndarray, tau) -> np.ndarray:
    """``F^{ij} tau_ij`` for component arrays."""
    t11, t12, t22 = _unpack(tau)
    return dF[..., 0] * t11 + 2.0 * dF[..., 1] * t12 + dF[..., 2] * t22


def admissibility(spec: CurvatureSpec, tau_field: SymTensorField) -> AdmissibilityReport:
    """Smallest eigenvalue of ``tau`` over the grid and the strict-convexity flag."""
    lo, _ = tau_field.eigenvalues()
    idx = np.unravel_index(int(np.argmin(lo)), lo.shape)
    m = float(lo[idx])
    return AdmissibilityReport(min_eigenvalue=m, strictly_convex=bool(m > 0), argmin=(int(idx[0]), int(idx[1])))
