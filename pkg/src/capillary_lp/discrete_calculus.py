"""Covariant finite-difference operators on the polar cap grid.

All operators are assembled once per domain as sparse matrices acting on the
vector of distinct nodal values (see :meth:`ScalarField.nodes`) and producing
full ``(n_rho, n_phi)`` arrays.  Frame components refer to the orthonormal
frame ``{d_rho, (1/sin rho) d_phi}``; at the pole each column ``j`` uses the
limit of that frame along the meridian ``phi = phi_j``.

Stencils are second order: centred in the interior, one-sided on the
boundary ring, and built from the Fourier modes 0, 1, 2 of the first ring at
the pole (a Taylor expansion along geodesics through the pole).  For the
Fourier mode ``cos(phi)`` the azimuthal truncation error is divided by
``sin(rho)``, so on the first rings the sup-norm error of the Hessian is
first order; even fields carry no such mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .cap_geometry import CapDomain, ScalarField

__all__ = [
    "Operators",
    "operators",
    "SymTensorField",
    "BoundaryTrace",
    "VectorField",
    "gradient",
    "hessian",
    "tau",
    "conormal_derivative",
    "robin_residual",
    "codazzi_defect",
]


@dataclass(frozen=True)
class VectorField:
    """Frame components ``(radial, azimuthal)`` of a tangent vector field."""

    domain: CapDomain
    radial: np.ndarray
    azimuthal: np.ndarray

    def norm(self) -> np.ndarray:
        return np.hypot(self.radial, self.azimuthal)


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric 2-tensor field stored as its three frame components."""

    domain: CapDomain
    t11: np.ndarray
    t12: np.ndarray
    t22: np.ndarray

    def components(self) -> np.ndarray:
        """Stacked components, shape ``(n_rho, n_phi, 3)``."""
        return np.stack([self.t11, self.t12, self.t22], axis=-1)

    def eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        """Smaller and larger eigenvalue at every node."""
        mean = 0.5 * (self.t11 + self.t22)
        rad = np.hypot(0.5 * (self.t11 - self.t22), self.t12)
        return mean - rad, mean + rad

    def trace(self) -> np.ndarray:
        return self.t11 + self.t22


@dataclass(frozen=True)
class BoundaryTrace:
    """Values on the boundary circle ``rho = theta`` and their conormal derivative."""

    domain: CapDomain
    values: np.ndarray
    conormal: np.ndarray

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


class Operators:
    """Sparse discrete operators for one domain.

    Every operator maps the distinct-node vector (length ``N``) to a full
    grid array flattened row-major (length ``n_rho * n_phi``).
    """

    def __init__(self, domain: CapDomain):
        self.domain = domain
        grid = domain.grid
        nr, nq = grid.n_rho, grid.n_phi
        h, dq = grid.h_rho, grid.h_phi
        if nr < 4:
            raise ValueError("need at least 4 rings for one-sided boundary stencils")

        self.expand = _expansion(nr, nq)
        self.select = _selection(nr, nq)

        dr = _radial_first(nr, h)
        drr = _radial_second(nr, h)
        dp = _periodic_first(nq, dq)
        dpp = _periodic_second(nq, dq)
        i_r = sp.identity(nr, format="csr")
        i_p = sp.identity(nq, format="csr")

        kr = sp.kron(dr, i_p, format="csr")
        krr = sp.kron(drr, i_p, format="csr")
        kp = sp.kron(i_r, dp, format="csr")
        kpp = sp.kron(i_r, dpp, format="csr")
        krp = sp.kron(dr, dp, format="csr")

        rho = np.repeat(grid.rho_values, nq)
        sin = np.sin(rho)
        inv_sin = np.zeros_like(sin)
        inv_sin[nq:] = 1.0 / sin[nq:]
        cot = np.cos(rho) * inv_sin

        d_inv_sin = sp.diags(inv_sin)
        d_cot = sp.diags(cot)

        grad_r = kr
        grad_p = d_inv_sin @ kp
        h11 = krr
        h12 = d_inv_sin @ (krp - d_cot @ kp)
        h22 = sp.diags(inv_sin**2) @ kpp + d_cot @ kr

        pole = _pole_rows(nq, h, grid.phi_values)
        self.grad_r = _with_pole(grad_r, pole["grad_r"], nq) @ self.expand
        self.grad_p = _with_pole(grad_p, pole["grad_p"], nq) @ self.expand
        self.h11 = _with_pole(h11, pole["h11"], nq) @ self.expand
        self.h12 = _with_pole(h12, pole["h12"], nq) @ self.expand
        self.h22 = _with_pole(h22, pole["h22"], nq) @ self.expand
        self.h11 = self.h11.tocsr()
        self.h12 = self.h12.tocsr()
        self.h22 = self.h22.tocsr()
        self.grad_r = self.grad_r.tocsr()
        self.grad_p = self.grad_p.tocsr()

        n_nodes = grid.n_nodes
        self.boundary_nodes = np.arange(n_nodes - nq, n_nodes)
        self.interior_nodes = np.arange(n_nodes - nq)
        # Conormal derivative at the boundary ring, on distinct nodes.
        self.conormal = self.select[self.boundary_nodes] @ self.grad_r

    def full(self, vec: np.ndarray) -> np.ndarray:
        return vec.reshape(self.domain.shape)


def _expansion(nr: int, nq: int) -> sp.csr_matrix:
    rows = np.arange(nr * nq)
    cols = np.concatenate([np.zeros(nq, dtype=int), 1 + np.arange((nr - 1) * nq)])
    return sp.csr_matrix((np.ones(nr * nq), (rows, cols)), shape=(nr * nq, 1 + (nr - 1) * nq))


def _selection(nr: int, nq: int) -> sp.csr_matrix:
    n_nodes = 1 + (nr - 1) * nq
    cols = np.concatenate([[0], nq + np.arange((nr - 1) * nq)])
    return sp.csr_matrix((np.ones(n_nodes), (np.arange(n_nodes), cols)), shape=(n_nodes, nr * nq))


def _radial_first(nr: int, h: float) -> sp.csr_matrix:
    m = sp.lil_matrix((nr, nr))
    for i in range(1, nr - 1):
        m[i, i - 1] = -0.5 / h
        m[i, i + 1] = 0.5 / h
    m[nr - 1, nr - 3] = 0.5 / h
    m[nr - 1, nr - 2] = -2.0 / h
    m[nr - 1, nr - 1] = 1.5 / h
    return m.tocsr()


def _radial_second(nr: int, h: float) -> sp.csr_matrix:
    m = sp.lil_matrix((nr, nr))
    h2 = h * h
    for i in range(1, nr - 1):
        m[i, i - 1] = 1.0 / h2
        m[i, i] = -2.0 / h2
        m[i, i + 1] = 1.0 / h2
    m[nr - 1, nr - 4] = -1.0 / h2
    m[nr - 1, nr - 3] = 4.0 / h2
    m[nr - 1, nr - 2] = -5.0 / h2
    m[nr - 1, nr - 1] = 2.0 / h2
    return m.tocsr()


def _periodic_first(nq: int, dq: float) -> sp.csr_matrix:
    idx = np.arange(nq)
    rows = np.concatenate([idx, idx])
    cols = np.concatenate([(idx + 1) % nq, (idx - 1) % nq])
    vals = np.concatenate([np.full(nq, 0.5 / dq), np.full(nq, -0.5 / dq)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nq, nq))


def _periodic_second(nq: int, dq: float) -> sp.csr_matrix:
    idx = np.arange(nq)
    rows = np.concatenate([idx, idx, idx])
    cols = np.concatenate([(idx + 1) % nq, idx, (idx - 1) % nq])
    d2 = dq * dq
    vals = np.concatenate([np.full(nq, 1.0 / d2), np.full(nq, -2.0 / d2), np.full(nq, 1.0 / d2)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nq, nq))


def _pole_rows(nq: int, h: float, phi: np.ndarray) -> dict[str, np.ndarray]:
    """Dense ``(nq, 2 nq)`` blocks acting on ``[pole row, first ring]``.

    Along the geodesic leaving the pole in direction ``e(phi)``,
    ``f(h, phi) = f0 + h <grad f, e> + h^2/2 Hess f(e, e) + O(h^3)``, so the
    Fourier modes of the first ring give the gradient (mode 1) and the
    Hessian (modes 0 and 2) to second order.
    """
    diff = phi[None, :] - phi[:, None]
    pole_avg = np.full((nq, nq), 1.0 / nq)
    c1 = 2.0 / (nq * h) * np.cos(diff)
    s1 = 2.0 / (nq * h) * np.sin(diff)
    mean = np.full((nq, nq), 1.0 / nq)
    c2 = 4.0 / (nq * h * h) * np.cos(2.0 * diff)
    s2 = 4.0 / (nq * h * h) * np.sin(2.0 * diff)
    # half trace of the Hessian: 2 (mean - f0) / h^2
    half_trace_ring = 2.0 / (h * h) * mean
    half_trace_pole = -2.0 / (h * h) * pole_avg
    zero = np.zeros((nq, nq))
    return {
        "grad_r": np.hstack([zero, c1]),
        "grad_p": np.hstack([zero, s1]),
        "h11": np.hstack([half_trace_pole, half_trace_ring + c2]),
        "h12": np.hstack([zero, s2]),
        "h22": np.hstack([half_trace_pole, half_trace_ring - c2]),
    }


def _with_pole(op: sp.csr_matrix, block: np.ndarray, nq: int) -> sp.csr_matrix:
    op = op.tolil()
    op[:nq, :] = 0.0
    op = op.tocsr()
    n = op.shape[1]
    pole = sp.csr_matrix(
        (block.ravel(), (np.repeat(np.arange(nq), 2 * nq), np.tile(np.arange(2 * nq), nq))),
        shape=(op.shape[0], n),
    )
    return (op + pole).tocsr()


@lru_cache(maxsize=16)
def operators(domain: CapDomain) -> Operators:
    """Cached operator set for ``domain``."""
    return Operators(domain)


def _vec(f) -> np.ndarray:
    if isinstance(f, ScalarField):
        return f.nodes()
    return np.asarray(f, dtype=float)


def gradient(f: ScalarField) -> VectorField:
    """Frame components of the covariant gradient of ``f``."""
    ops = operators(f.domain)
    v = f.nodes()
    return VectorField(f.domain, ops.full(ops.grad_r @ v), ops.full(ops.grad_p @ v))


def hessian(f: ScalarField) -> SymTensorField:
    """Frame components of the covariant Hessian of ``f``."""
    ops = operators(f.domain)
    v = f.nodes()
    return SymTensorField(
        f.domain, ops.full(ops.h11 @ v), ops.full(ops.h12 @ v), ops.full(ops.h22 @ v)
    )


def tau(f: ScalarField) -> SymTensorField:
    """``tau[f] = Hess f + f g`` in frame components."""
    hess = hessian(f)
    return SymTensorField(f.domain, hess.t11 + f.values, hess.t12, hess.t22 + f.values)


def conormal_derivative(f: ScalarField) -> BoundaryTrace:
    """One-sided second-order derivative along the outward conormal ``d_rho``."""
    ops = operators(f.domain)
    return BoundaryTrace(f.domain, f.boundary.copy(), ops.conormal @ f.nodes())


def robin_residual(s: ScalarField) -> BoundaryTrace:
    """``d_mu s - cot(theta) s`` on the boundary circle."""
    trace = conormal_derivative(s)
    cot = 1.0 / np.tan(s.domain.theta)
    return BoundaryTrace(s.domain, trace.conormal - cot * trace.values, trace.conormal)


def codazzi_defect(u: ScalarField, rho_min: float | None = None) -> np.ndarray:
    """Discrete Codazzi commutation defect at interior rings.

    With ``u_{ijm}`` denoting the covariant derivative of the Hessian
    ``u_{ij}`` in direction ``m``, returns the array of
    ``u_{mij} - u_{ijm} - (u_m delta_ij - u_j delta_mi)`` over all index
    triples, shape ``(rings, n_phi, 2, 2, 2)``.  Only rings with
    ``rho >= rho_min`` (default ``theta / 4``) and at least two nodes inside
    the boundary are kept, so the sampled region does not move with the grid.
    """
    dom = u.domain
    grid = dom.grid
    h, dq = grid.h_rho, grid.h_phi
    v = u.values
    rho = grid.rho_values[:, None]
    sin, cos = np.sin(rho), np.cos(rho)

    def d_r(a):
        out = np.full_like(a, np.nan)
        out[1:-1] = (a[2:] - a[:-2]) / (2 * h)
        return out

    def d_p(a):
        return (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2 * dq)

    def d_rr(a):
        out = np.full_like(a, np.nan)
        out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / (h * h)
        return out

    def d_pp(a):
        return (np.roll(a, -1, axis=1) - 2 * a + np.roll(a, 1, axis=1)) / (dq * dq)

    with np.errstate(divide="ignore", invalid="ignore"):
        cot = cos / sin
        fr, fp = d_r(v), d_p(v)
        # Coordinate Hessian A_ab = d_a d_b f - Gamma^c_ab d_c f.
        a = np.empty(v.shape + (2, 2))
        a[..., 0, 0] = d_rr(v)
        a[..., 0, 1] = a[..., 1, 0] = d_r(fp) - cot * fp
        a[..., 1, 1] = d_pp(v) + sin * cos * fr

        # Christoffel symbols G[c, a, b] = Gamma^c_{ab}.
        gam = np.zeros(v.shape + (2, 2, 2))
        gam[..., 0, 1, 1] = -sin * cos
        gam[..., 1, 0, 1] = gam[..., 1, 1, 0] = cot

        # T[a, b, c] = (nabla_c A)_{ab}.
        da = np.stack([d_r(a), d_p(a)], axis=-1)
        t = (
            da
            - np.einsum("...dca,...db->...abc", gam, a)
            - np.einsum("...dcb,...ad->...abc", gam, a)
        )
        scale = np.stack([np.ones_like(sin), sin], axis=-1)[:, 0, :]  # (n_rho, 2)
        sa = scale[:, None, :, None, None]
        sb = scale[:, None, None, :, None]
        sc = scale[:, None, None, None, :]
        t_hat = t / (sa * sb * sc)
        grad_hat = np.stack([fr, fp / sin], axis=-1)

    eye = np.eye(2)
    # D[m, i, j] = T_hat[m, i, j] - T_hat[i, j, m] - (u_m d_ij - u_j d_mi)
    defect = (
        t_hat
        - np.transpose(t_hat, (0, 1, 4, 2, 3))
        - np.einsum("...m,ij->...mij", grad_hat, eye)
        + np.einsum("...j,mi->...mij", grad_hat, eye)
    )
    if rho_min is None:
        rho_min = 0.25 * dom.theta
    keep = np.flatnonzero(grid.rho_values >= rho_min)
    keep = keep[(keep >= 2) & (keep <= grid.n_rho - 3)]
    return defect[keep]
