"""One-dimensional oracle for rotationally symmetric data.

For ``s = s(rho)`` the tensor ``tau[s]`` is diagonal in the polar frame with
eigenvalues::

    lambda_rad = s'' + s,        lambda_tan = cot(rho) s' + s,

the second one with multiplicity ``n - 1``.  The equation becomes a two-point
boundary value problem on ``[0, theta]`` with ``s'(0) = 0`` and the Robin
condition ``s'(theta) = cot(theta) s(theta)``.  It is discretised with second
order differences on a fine uniform grid and solved by damped Newton.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .cap_geometry import ell_profile
from .curvature import CurvatureSpec, F_derivative, F_value, Kind
from .exceptions import ConvexityLost, NoConvergence, ParameterMismatch

__all__ = ["RadialProfile", "solve_radial", "compare_to_2d", "compare_field", "write_profile_csv"]


@dataclass(frozen=True)
class RadialProfile:
    """Radial solution on ``rho_nodes`` together with its eigenvalues."""

    theta: float
    curvature: CurvatureSpec
    p: float
    rho_nodes: np.ndarray
    s_values: np.ndarray
    phi_values: np.ndarray
    multiplier: float = 1.0
    residual_max: float = 0.0
    iterations: int = 0

    @property
    def h(self) -> float:
        return float(self.rho_nodes[1] - self.rho_nodes[0])

    @property
    def lambda_rad(self) -> np.ndarray:
        return _eigenvalues(self.s_values, self.rho_nodes)[0]

    @property
    def lambda_tan(self) -> np.ndarray:
        return _eigenvalues(self.s_values, self.rho_nodes)[1]

    def pole_slope(self) -> float:
        """One-sided second order ``s'(0)``."""
        s, h = self.s_values, self.h
        return float((-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * h))

    def robin_defect(self) -> float:
        """``s'(theta) - cot(theta) s(theta)`` with a one-sided stencil.

        The solve imposes the central-difference form through a ghost node, so
        this is an independent check and is ``O(h^2)`` rather than zero.
        """
        s, h = self.s_values, self.h
        ds = (3.0 * s[-1] - 4.0 * s[-2] + s[-3]) / (2.0 * h)
        return float(ds - s[-1] / math.tan(self.theta))

    def __call__(self, rho) -> np.ndarray:
        return CubicSpline(self.rho_nodes, self.s_values)(rho)


def _eigenvalues(s: np.ndarray, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = rho[1] - rho[0]
    d2 = np.empty_like(s)
    d1 = np.empty_like(s)
    d2[1:-1] = (s[2:] - 2.0 * s[1:-1] + s[:-2]) / h**2
    d1[1:-1] = (s[2:] - s[:-2]) / (2.0 * h)
    # Mirror ghost s(-h) = s(h) at the pole.
    d2[0] = 2.0 * (s[1] - s[0]) / h**2
    # Ghost node from the Robin condition, as in the solve.
    cot_t = 1.0 / math.tan(rho[-1])
    d2[-1] = (2.0 * s[-2] + (2.0 * h * cot_t - 2.0) * s[-1]) / h**2
    d1[-1] = cot_t * s[-1]
    lam_rad = d2 + s
    lam_tan = np.empty_like(s)
    lam_tan[1:] = d1[1:] / np.tan(rho[1:]) + s[1:]
    # cot(rho) s' -> s''(0) as rho -> 0.
    lam_tan[0] = d2[0] + s[0]
    return lam_rad, lam_tan


class _Radial:
    def __init__(self, theta, curvature, p, rho, phi, norm_target):
        m = rho.size
        h = rho[1] - rho[0]
        self.curvature, self.p, self.phi = curvature, p, phi
        self.m = m
        cot = np.zeros(m)
        cot[1:] = 1.0 / np.tan(rho[1:])
        d2 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="lil") / h**2
        d2[0, 1] = 2.0 / h**2
        d1 = sp.diags([-1.0, 0.0, 1.0], [-1, 0, 1], shape=(m, m), format="lil") / (2.0 * h)
        d1[0, 1] = 0.0
        # Ghost node s_m = s_{m-2} + 2 h cot(theta) s_{m-1} eliminates the
        # central-difference Robin condition at rho = theta.
        cot_t = 1.0 / math.tan(theta)
        d2[m - 1, m - 2] = 2.0 / h**2
        d2[m - 1, m - 1] = (2.0 * h * cot_t - 2.0) / h**2
        d1[m - 1, m - 2] = 0.0
        d1[m - 1, m - 1] = cot_t
        eye = sp.identity(m, format="csr")
        self.a_rad = d2.tocsr() + eye
        a_tan = (sp.diags(cot) @ d1.tocsr() + eye).tolil()
        a_tan[0, :] = self.a_rad[0, :]
        self.a_tan = a_tan.tocsr()
        # Area weights sin(rho) d rho, trapezoidal.
        w = np.sin(rho) * h
        w[[0, -1]] *= 0.5
        self.mean_weights = w / w.sum()
        self.norm_target = norm_target

    @property
    def homogeneous(self) -> bool:
        return self.norm_target is not None

    def tau(self, s):
        lr = self.a_rad @ s
        return np.stack([lr, np.zeros_like(lr), self.a_tan @ s], axis=-1)

    def residual(self, s, lam, phi):
        t = self.tau(s)
        out = F_value(self.curvature, t) - lam * s ** (self.p - 1.0) * phi
        if self.homogeneous:
            out = np.append(out, self.mean_weights @ s - self.norm_target)
        return out

    def jacobian(self, s, lam, phi):
        t = self.tau(s)
        dF = F_derivative(self.curvature, t)
        zeroth = lam * (self.p - 1.0) * s ** (self.p - 2.0) * phi
        jac = sp.diags(dF[:, 0]) @ self.a_rad + sp.diags(dF[:, 2]) @ self.a_tan - sp.diags(zeroth)
        if self.homogeneous:
            col = -(s ** (self.p - 1.0)) * phi
            jac = sp.bmat(
                [[jac, sp.csr_matrix(col[:, None])], [sp.csr_matrix(self.mean_weights[None, :]), None]],
                format="csr",
            )
        return jac.tocsc()

    def convex(self, s) -> bool:
        t = self.tau(s)
        return bool(np.min(s) > 0 and np.min(t[:, 0]) > 0 and np.min(t[:, 2]) > 0)


def _newton(system: _Radial, s, lam, phi, tol, max_iters):
    homog = system.homogeneous
    x = np.append(s, lam) if homog else np.array(s)

    def split(x_):
        return (x_[:-1], float(x_[-1])) if homog else (x_, lam)

    for it in range(max_iters + 1):
        g = system.residual(*split(x), phi)
        if np.max(np.abs(g)) <= tol:
            return split(x) + (g, it)
        if it == max_iters:
            break
        dx = spla.splu(system.jacobian(*split(x), phi)).solve(-g)
        # A correction at rounding level also ends the iteration: the
        # residual of second differences cannot drop below eps / h^2.
        if np.max(np.abs(dx)) <= 1e-9 * np.max(np.abs(x)):
            x = x + dx
            return split(x) + (system.residual(*split(x), phi), it + 1)
        # Small corrections are taken in full; near the rounding floor the
        # sufficient-decrease test is meaningless.
        if np.max(np.abs(dx)) <= 1e-6 * np.max(np.abs(x)) and system.convex(split(x + dx)[0]):
            x = x + dx
            continue
        alpha, f0 = 1.0, float(g @ g)
        while True:
            trial = x + alpha * dx
            ts, tl = split(trial)
            if system.convex(ts):
                gt = system.residual(ts, tl, phi)
                if float(gt @ gt) <= (1.0 - 2e-4 * alpha) * f0:
                    break
            alpha *= 0.5
            if alpha < 2.0**-10:
                if not system.convex(ts):
                    raise ConvexityLost("radial iterate left the convex cone")
                break
        x = trial
    raise NoConvergence(f"radial Newton did not converge (residual {np.max(np.abs(g)):.3e})")


def solve_radial(
    theta: float,
    n: int,
    k: int,
    p: float,
    phi_profile,
    tol: float = 1e-10,
    *,
    kind: Kind | str = Kind.SigmaK,
    n_nodes: int = 4096,
    scale: float | None = None,
    max_iters: int = 60,
) -> RadialProfile:
    """Solve the rotationally symmetric problem on ``[0, theta]``.

    Parameters
    ----------
    theta : float
        Contact angle in ``(0, pi/2)``.
    n, k : int
        Dimension and order of the curvature function.
    p : float
        Exponent of ``s`` on the right-hand side.
    phi_profile : callable or float
        ``phi(rho)`` evaluated on an array, or a positive constant.
    tol : float
        Sup-norm tolerance on the discrete residual.
    kind : Kind or str
        ``"sigma_k"`` or ``"quotient"``.
    n_nodes : int
        Number of radial nodes, at least 2048.
    scale : float, optional
        For ``p = k + 1`` the solution is normalised to have the same area
        mean as ``scale * ell`` (default 1); the multiplier in front of
        ``s^(p-1) phi`` becomes an unknown.

    Returns
    -------
    RadialProfile
    """
    if not 0.0 < theta < 0.5 * math.pi:
        raise ValueError("theta must lie in (0, pi/2)")
    if n_nodes < 2048:
        raise ValueError("the oracle needs at least 2048 nodes")
    curvature = CurvatureSpec(kind, k, n)
    rho = np.linspace(0.0, theta, n_nodes)
    phi = np.broadcast_to(phi_profile(rho) if callable(phi_profile) else float(phi_profile), rho.shape)
    phi = np.array(phi, dtype=float)
    if np.min(phi) <= 0:
        raise ValueError("phi_profile must be positive")
    ell = ell_profile(theta, rho)
    homogeneous = abs(p - 1.0 - k) < 1e-12
    if scale is not None:
        r = float(scale)
    elif homogeneous:
        r = 1.0
    else:
        w = np.sin(rho)
        m = np.trapezoid(ell ** (p - 1.0) * phi * w, rho) / np.trapezoid(w, rho)
        r = (m / curvature.model_value) ** (1.0 / (k + 1.0 - p))
    s = r * ell
    phi_model = curvature.model_value * r**k * s ** (1.0 - p)
    system = _Radial(theta, curvature, p, rho, phi, None)
    if homogeneous:
        system.norm_target = float(system.mean_weights @ s)

    lam = 1.0
    total = 0
    exact = np.array_equal(phi, phi_model)
    steps = [1.0] if exact else np.round(np.linspace(0.0, 1.0, 11), 12)
    g = np.zeros(1)
    for t in steps:
        phi_t = (1.0 - t) * phi_model + t * phi
        s, lam, g, it = _newton(system, s, lam, phi_t, tol, max_iters)
        total += it
    return RadialProfile(
        theta=theta,
        curvature=curvature,
        p=p,
        rho_nodes=rho,
        s_values=np.array(s),
        phi_values=phi,
        multiplier=float(lam),
        residual_max=float(np.max(np.abs(g))),
        iterations=total,
    )


def compare_to_2d(profile: RadialProfile, bundle) -> float:
    """Max ``|s_2D - s_1D| / max s_2D`` with the profile interpolated to the rings.

    Raises
    ------
    ParameterMismatch
        The two solutions were computed for different data.
    """
    return compare_field(profile, bundle.s, bundle.spec)


def compare_field(profile: RadialProfile, s, spec=None) -> float:
    """As :func:`compare_to_2d` for a bare field ``s`` and optional problem ``spec``."""
    dom = s.domain
    if abs(dom.theta - profile.theta) > 1e-12:
        raise ParameterMismatch(f"parameter mismatch: theta {dom.theta!r} vs {profile.theta!r}")
    if spec is not None:
        if spec.curvature != profile.curvature:
            raise ParameterMismatch(f"parameter mismatch: curvature {spec.curvature} vs {profile.curvature}")
        if abs(spec.p - profile.p) > 1e-12:
            raise ParameterMismatch(f"parameter mismatch: p {spec.p!r} vs {profile.p!r}")
        rings = dom.grid.rho_values
        phi_1d = CubicSpline(profile.rho_nodes, profile.phi_values)(rings)
        gap = np.max(np.abs(spec.phi.values - phi_1d[:, None])) / np.max(np.abs(phi_1d))
        if gap > 1e-6:
            raise ParameterMismatch(f"parameter mismatch: phi differs by {gap:.2e} (or is not axisymmetric)")
    s1 = profile(dom.grid.rho_values)[:, None]
    return float(np.max(np.abs(s.values - s1)) / s.max())


def write_profile_csv(path, profile: RadialProfile) -> Path:
    """Write the profile as ``rho,s`` rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "s"])
        for r, v in zip(profile.rho_nodes, profile.s_values):
            writer.writerow([f"{r:.17g}", f"{v:.17g}"])
    return path
