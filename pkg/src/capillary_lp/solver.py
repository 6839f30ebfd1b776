"""Damped Newton continuation for the capillary curvature problem.

Discrete problem on the distinct grid nodes::

    F(tau[s]) - lam * s^(p-1) phi = 0     at the pole and interior rings,
    d_rho s - cot(theta) s = 0            on the boundary ring.

Away from ``p = k + 1`` the multiplier is fixed, ``lam = 1``.  At
``p = k + 1`` both sides are ``k``-homogeneous in ``s``; the continuum problem
then has a ray of solutions and its discretisation generically has none
besides ``s = 0``.  There the solver treats ``lam`` as an unknown and pins the
scale by the mean of ``s``.  For data that admits a continuum solution,
``lam = 1 + O(h^2)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cap_geometry import CapDomain, ScalarField, ell_field, integrate, node_weights, reflect
from .curvature import AdmissibilityReport, CurvatureSpec, F_derivative, F_value, admissibility
from .discrete_calculus import BoundaryTrace, operators, tau
from .exceptions import ConvexityLost, NonAdmissible, NoConvergence, SingularLinearization

__all__ = [
    "ProblemSpec",
    "SolveConfig",
    "SolutionBundle",
    "LinearSolveReport",
    "model_phi",
    "seed_scale",
    "initial_guess",
    "residual",
    "newton_step",
    "solve",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemSpec:
    """``F(tau[s]) = s^(p-1) phi`` on ``domain`` with the Robin condition."""

    domain: CapDomain
    curvature: CurvatureSpec
    p: float
    phi: ScalarField

    def __post_init__(self):
        if self.phi.domain != self.domain:
            raise ValueError("phi lives on a different domain")
        if self.phi.min() <= 0.0:
            raise ValueError("phi must be positive")
        asym = np.max(np.abs(self.phi.values - reflect(self.domain, self.phi).values))
        if asym != 0.0:
            raise ValueError(f"phi must be even; max |phi - phi o R| = {asym:.3e}")
        if not self.in_guaranteed_range:
            warnings.warn(
                f"p = {self.p} is outside guaranteed range 1 < p < k+1 = {self.curvature.k + 1}",
                stacklevel=3,
            )

    @property
    def in_guaranteed_range(self) -> bool:
        return 1.0 < self.p < self.curvature.k + 1

    @property
    def homogeneous(self) -> bool:
        """True when ``p = k + 1`` and the equation is scale invariant."""
        return abs(self.p - 1.0 - self.curvature.k) < 1e-12

    def with_phi(self, phi: ScalarField) -> "ProblemSpec":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ProblemSpec(self.domain, self.curvature, self.p, phi)


@dataclass(frozen=True)
class SolveConfig:
    newton_tol: float = 1e-10
    max_newton_iters: int = 60
    damping_factor: float = 0.5
    min_step: float = 2.0**-10
    armijo_c: float = 1e-4
    # Blend parameters t for phi_t = (1 - t) phi_model + t phi.
    continuation_steps: tuple[float, ...] = tuple(np.round(np.linspace(0.1, 1.0, 10), 12))
    convexity_floor: float = 0.0
    linear_tol: float = 1e-10
    tikhonov_shift: float = 1e-10
    # Seed scale r in s0 = r * ell; required to fix the ray when p = k + 1.
    scale: float | None = None

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if not 0.0 < self.damping_factor < 1.0:
            raise ValueError("damping_factor must lie in (0, 1)")
        if self.continuation_steps and abs(self.continuation_steps[-1] - 1.0) > 1e-12:
            raise ValueError("continuation must end at t = 1")


@dataclass(frozen=True)
class LinearSolveReport:
    # Normwise backward error of the accepted solution.
    relative_residual: float
    shifted: bool
    multiplier_step: float = 0.0


@dataclass
class SolutionBundle:
    s: ScalarField
    residual_history: list[float]
    interior_residual_max: float
    robin_residual_max: float
    admissibility: AdmissibilityReport
    iterations: int
    multiplier: float = 1.0
    continuation: list[float] = field(default_factory=list)
    spec: ProblemSpec | None = None

    def digest(self) -> dict[str, float | int]:
        return {
            "iterations": self.iterations,
            "interior_residual_max": self.interior_residual_max,
            "robin_residual_max": self.robin_residual_max,
            "min_tau_eigenvalue": self.admissibility.min_eigenvalue,
            "strictly_convex": int(self.admissibility.strictly_convex),
            "multiplier": self.multiplier,
            "s_min": self.s.min(),
            "s_max": self.s.max(),
        }


def _mean(domain: CapDomain, values: np.ndarray) -> float:
    area = 2.0 * math.pi * (1.0 - math.cos(domain.theta))
    return integrate(domain, values) / area


def model_phi(domain: CapDomain, curvature: CurvatureSpec, p: float, r: float = 1.0) -> ScalarField:
    """The datum for which ``s = r * ell`` solves the continuum problem exactly."""
    ell = ell_field(domain).values
    return ScalarField(domain, curvature.model_value * r**curvature.k * (r * ell) ** (1.0 - p), positive=True)


def seed_scale(spec: ProblemSpec, scale: float | None = None) -> float:
    """Scale ``r`` such that ``s = r ell`` satisfies the equation in the mean.

    Solves ``F(id) r^k = mean((r ell)^(p-1) phi)``.  The two sides have the
    same degree when ``p = k + 1``; then ``scale`` (default 1) is returned.
    """
    if scale is not None:
        return float(scale)
    if spec.homogeneous:
        return 1.0
    ell = ell_field(spec.domain).values
    m = _mean(spec.domain, ell ** (spec.p - 1.0) * spec.phi.values)
    return (m / spec.curvature.model_value) ** (1.0 / (spec.curvature.k + 1.0 - spec.p))


def initial_guess(spec: ProblemSpec, scale: float | None = None) -> ScalarField:
    """``r * ell`` with ``r`` from :func:`seed_scale`."""
    r = seed_scale(spec, scale)
    return ScalarField(spec.domain, r * ell_field(spec.domain).values, positive=True)


class _System:
    """Residual and Jacobian assembly on the distinct-node vector."""

    def __init__(self, spec: ProblemSpec, norm_target: float | None = None):
        self.spec = spec
        ops = operators(spec.domain)
        sel = ops.select
        self.h11 = (sel @ ops.h11).tocsr()
        self.h12 = (sel @ ops.h12).tocsr()
        self.h22 = (sel @ ops.h22).tocsr()
        self.n = spec.domain.grid.n_nodes
        self.interior = ops.interior_nodes
        self.boundary = ops.boundary_nodes
        cot = 1.0 / math.tan(spec.domain.theta)
        ident = sp.identity(self.n, format="csr")
        self.robin_rows = (ops.conormal - cot * ident[self.boundary]).tocsr()
        self.ident_interior = ident[self.interior]
        self.phi = spec.phi.nodes()
        self.homogeneous = spec.homogeneous
        w = node_weights(spec.domain)
        self.mean_weights = w / w.sum()
        self.norm_target = norm_target

    def tau_nodes(self, s: np.ndarray) -> np.ndarray:
        return np.stack([self.h11 @ s + s, self.h12 @ s, self.h22 @ s + s], axis=-1)

    def residual(self, s: np.ndarray, lam: float) -> np.ndarray:
        p = self.spec.p
        t = self.tau_nodes(s)[self.interior]
        si = s[self.interior]
        pde = F_value(self.spec.curvature, t) - lam * si ** (p - 1.0) * self.phi[self.interior]
        out = np.concatenate([pde, self.robin_rows @ s])
        if self.homogeneous:
            out = np.append(out, self.mean_weights @ s - self.norm_target)
        return out

    def jacobian(self, s: np.ndarray, lam: float) -> sp.csc_matrix:
        p = self.spec.p
        t = self.tau_nodes(s)
        dF = F_derivative(self.spec.curvature, t[self.interior])
        si = s[self.interior]
        phi_i = self.phi[self.interior]
        rows = self.interior
        zeroth = dF[:, 0] + dF[:, 2] - lam * (p - 1.0) * si ** (p - 2.0) * phi_i
        j_pde = (
            sp.diags(dF[:, 0]) @ self.h11[rows]
            + sp.diags(2.0 * dF[:, 1]) @ self.h12[rows]
            + sp.diags(dF[:, 2]) @ self.h22[rows]
            + sp.diags(zeroth) @ self.ident_interior
        )
        jac = sp.vstack([j_pde, self.robin_rows], format="csr")
        if self.homogeneous:
            col = np.zeros(self.n)
            col[self.interior] = -(si ** (p - 1.0)) * phi_i
            jac = sp.bmat(
                [[jac, sp.csr_matrix(col[:, None])], [sp.csr_matrix(self.mean_weights[None, :]), None]],
                format="csr",
            )
        return jac.tocsc()


def _linear_solve(jac: sp.csc_matrix, rhs: np.ndarray, config: SolveConfig):
    # Normwise backward error ||r|| / (||J|| ||x|| + ||b||) in the inf-norm;
    # ||r|| / ||b|| alone bottoms out at cond(J) * eps near convergence.
    jnorm = float(abs(jac).sum(axis=1).max())
    bnorm = float(np.max(np.abs(rhs)))

    def backward_error(x, r):
        return float(np.max(np.abs(r))) / max(jnorm * float(np.max(np.abs(x))) + bnorm, 1e-300)

    def attempt(mat):
        try:
            lu = spla.splu(mat)
        except RuntimeError:
            return None, math.inf
        x = lu.solve(rhs)
        rel = math.inf
        # A few rounds of iterative refinement with the same factorisation.
        for _ in range(4):
            if not np.all(np.isfinite(x)):
                return None, math.inf
            r = rhs - jac @ x
            rel = backward_error(x, r)
            if rel <= config.linear_tol:
                break
            x = x + lu.solve(r)
        return x, rel

    x, rel = attempt(jac)
    shifted = False
    if x is None or rel > config.linear_tol:
        shift = config.tikhonov_shift * sp.identity(jac.shape[0], format="csc")
        x, rel = attempt((jac + shift).tocsc())
        shifted = True
    if x is None or rel > config.linear_tol:
        raise SingularLinearization(f"linear solve failed, relative residual {rel:.3e}")
    return x, LinearSolveReport(relative_residual=float(rel), shifted=shifted)


def residual(spec: ProblemSpec, s: ScalarField, multiplier: float = 1.0) -> tuple[np.ndarray, BoundaryTrace]:
    """Interior residual ``F(tau[s]) - multiplier * s^(p-1) phi`` and the Robin trace.

    The interior part has shape ``(n_rho - 1, n_phi)`` (pole row replicated).
    """
    t = tau(s)
    ti = np.stack([t.t11[:-1], t.t12[:-1], t.t22[:-1]], axis=-1)
    interior = F_value(spec.curvature, ti) - multiplier * s.values[:-1] ** (spec.p - 1.0) * spec.phi.values[:-1]
    ops = operators(spec.domain)
    v = s.nodes()
    cot = 1.0 / math.tan(spec.domain.theta)
    robin = ops.conormal @ v - cot * v[ops.boundary_nodes]
    return interior, BoundaryTrace(spec.domain, robin, ops.conormal @ v)


def system_mean(spec: ProblemSpec, s: ScalarField) -> float:
    w = node_weights(spec.domain)
    return float((w / w.sum()) @ s.nodes())


def newton_step(spec: ProblemSpec, s: ScalarField, config: SolveConfig = SolveConfig(), multiplier: float = 1.0):
    """One undamped Newton correction at ``s``.

    Returns ``(delta, report)``.  For ``p = k + 1`` the mean of ``s`` is held
    fixed and ``report.multiplier_step`` is the multiplier correction.
    """
    system = _System(spec, norm_target=system_mean(spec, s))
    v = s.nodes()
    lo = tau(s).eigenvalues()[0]
    if lo.min() <= config.convexity_floor:
        raise NonAdmissible(f"tau is not positive definite (min eigenvalue {lo.min():.3e})")
    g = system.residual(v, multiplier)
    jac = system.jacobian(v, multiplier)
    x, report = _linear_solve(jac, -g, config)
    if system.homogeneous:
        report = LinearSolveReport(report.relative_residual, report.shifted, float(x[-1]))
    return ScalarField.from_nodes(spec.domain, x[: system.n]), report


_ROUNDOFF = 8.0 * np.finfo(float).eps


def _symmetrize(domain: CapDomain, v: np.ndarray) -> np.ndarray:
    f = ScalarField.from_nodes(domain, v)
    even = 0.5 * (f.values + reflect(domain, f).values)
    return ScalarField(domain, even).nodes()


def _newton(system: _System, v, lam, config, history, budget):
    """Damped Newton at fixed data.  Returns ``(v, lam, iterations)``."""
    dom = system.spec.domain
    homog = system.homogeneous
    floor = config.convexity_floor

    def unpack(x):
        return (x[:-1], float(x[-1])) if homog else (x, lam)

    def pack(v_, lam_):
        return np.append(v_, lam_) if homog else v_

    def admissible(v_):
        if np.min(v_) <= 0.0:
            return False
        t = system.tau_nodes(v_)
        mean = 0.5 * (t[:, 0] + t[:, 2])
        rad = np.hypot(0.5 * (t[:, 0] - t[:, 2]), t[:, 1])
        return bool(np.min(mean - rad) > floor)

    def project(x_):
        v_, lam_ = unpack(x_)
        return pack(_symmetrize(dom, v_), lam_)

    x = pack(v, lam)
    for it in range(budget + 1):
        g = system.residual(*unpack(x))
        gmax = float(np.max(np.abs(g)))
        history.append(gmax)
        if gmax <= config.newton_tol:
            return unpack(x) + (it,)
        if it == budget:
            break
        jac = system.jacobian(*unpack(x))
        # Residual evaluation itself is only accurate to about
        # eps * ||J|| * ||s||; stop there if newton_tol is below it.
        floor = _ROUNDOFF * float(abs(jac).sum(axis=1).max()) * float(np.max(np.abs(x)))
        if gmax <= floor:
            log.info("residual %.3e at evaluation floor %.3e", gmax, floor)
            return unpack(x) + (it,)
        dx, _ = _linear_solve(jac, -g, config)
        f0 = 0.5 * float(g @ g)
        alpha = 1.0
        convex_fail = False
        while alpha >= config.min_step:
            trial = project(x + alpha * dx)
            if admissible(unpack(trial)[0]):
                gt = system.residual(*unpack(trial))
                if 0.5 * float(gt @ gt) <= (1.0 - 2.0 * config.armijo_c * alpha) * f0:
                    break
            else:
                convex_fail = True
            alpha *= config.damping_factor
        else:
            if convex_fail:
                raise ConvexityLost(
                    f"step shortening exhausted at residual {gmax:.3e}; iterate leaves the convex cone"
                )
            # No sufficient decrease even for tiny steps: the residual sits at
            # roundoff level.  Take the shortest step and let the budget decide.
            trial = project(x + config.min_step * dx)
        x = trial
    raise NoConvergence(f"no convergence in {budget} Newton iterations (residual {history[-1]:.3e})")


def solve(spec: ProblemSpec, config: SolveConfig = SolveConfig()) -> SolutionBundle:
    """Solve from the matched model seed by continuation in ``phi``.

    Raises
    ------
    NoConvergence
        Some continuation step used up ``max_newton_iters`` iterations.
    ConvexityLost
        Step shortening could not keep ``tau[s]`` above the convexity floor.
    """
    dom = spec.domain
    r = seed_scale(spec, config.scale)
    phi_model = model_phi(dom, spec.curvature, spec.p, r)
    s0 = r * ell_field(dom).nodes()
    w = node_weights(dom)
    norm_target = float(w @ s0 / w.sum()) if spec.homogeneous else None

    target = spec.phi.values
    if np.array_equal(target, phi_model.values):
        steps = [1.0]
    else:
        steps = [0.0] + [float(t) for t in config.continuation_steps]

    history: list[float] = []
    v, lam = s0, 1.0
    used = 0
    for t in steps:
        phi_t = ScalarField(dom, (1.0 - t) * phi_model.values + t * target)
        system = _System(spec.with_phi(phi_t), norm_target=norm_target)
        v, lam, it = _newton(system, v, lam, config, history, config.max_newton_iters)
        used += it
        log.debug("continuation t=%.3f: %d iterations, residual %.3e", t, it, history[-1])

    s = ScalarField(dom, ScalarField.from_nodes(dom, v).values, positive=True)
    interior, robin = residual(spec, s, lam)
    return SolutionBundle(
        s=s,
        residual_history=history,
        interior_residual_max=float(np.max(np.abs(interior))),
        robin_residual_max=float(np.max(np.abs(robin.values))),
        admissibility=admissibility(spec.curvature, tau(s)),
        iterations=used,
        multiplier=float(lam),
        continuation=steps,
        spec=spec,
    )
