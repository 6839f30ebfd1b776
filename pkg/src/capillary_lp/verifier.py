"""Numerical checks of the a priori estimates on solved instances.

With ``u = s / ell`` and ``beta = 2 - gamma`` the auxiliary function is::

    Psi = ell^beta |grad u|^2 / u^gamma.

On the boundary circle ``d_mu u = 0`` and ``u_{alpha mu} = -cot(theta) u_alpha``
for any ``s`` satisfying the Robin condition, so that::

    d_mu log Psi = beta cot(theta) - 2 cot(theta) = -gamma cot(theta)

wherever ``grad u`` does not vanish.  The verifier evaluates the left side
with the discrete operators and reports the defect, together with the
gradient ratio, the base-body support function, and the chain of elementary
inequalities between ``R = max s``, the height ``H`` and the radii of the
base.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .cap_geometry import ScalarField, ell_field, ell_gradient
from .discrete_calculus import gradient, hessian
from .embedding import EmbeddedSurface
from .exceptions import AllNodesDegenerate, MaxOnBoundary

__all__ = [
    "EstimateSpec",
    "EstimateReport",
    "BoundaryIdentity",
    "GeometricQuantities",
    "ChainCheck",
    "Stationarity",
    "psi_field",
    "gradient_estimate_ratio",
    "boundary_identity",
    "geometric_quantities",
    "base_body_gradient_bound",
    "inequality_chain",
    "interior_stationarity",
    "estimate_report",
]

# Nodes with |grad u| below this are skipped in log-Psi operations.
DEGENERATE_ABS = 1e-8
# Boundary nodes whose tangential |grad u| is below this fraction of its
# maximum over the circle are treated as degenerate as well.
DEGENERATE_REL = 0.4


@dataclass(frozen=True)
class EstimateSpec:
    """Exponent ``gamma`` of the auxiliary function, ``0 < gamma < 2 (p - 1) / k``."""

    gamma: float
    p: float
    k: int = 1

    def __post_init__(self):
        upper = 2.0 * (self.p - 1.0) / self.k
        if not 0.0 < self.gamma < upper:
            raise ValueError(f"gamma must lie strictly inside (0, 2(p-1)/k) = (0, {upper:.6g}); got {self.gamma!r}")

    @property
    def beta(self) -> float:
        return 2.0 - self.gamma

    @classmethod
    def from_fraction(cls, fraction: float, p: float, k: int = 1) -> "EstimateSpec":
        """``gamma = fraction * 2 (p - 1) / k``."""
        return cls(gamma=fraction * 2.0 * (p - 1.0) / k, p=p, k=k)


def _u_field(s: ScalarField) -> ScalarField:
    if s.min() <= 0.0:
        raise ValueError("s must be positive")
    return ScalarField(s.domain, s.values / ell_field(s.domain).values)


def psi_field(s: ScalarField, est: EstimateSpec) -> ScalarField:
    """``Psi = ell^beta |grad u|^2 / u^gamma`` with ``u = s / ell`` nodewise."""
    ell = ell_field(s.domain).values
    u = _u_field(s)
    g = gradient(u).norm()
    return ScalarField(s.domain, ell**est.beta * g**2 / u.values**est.gamma)


def gradient_estimate_ratio(s: ScalarField, est: EstimateSpec) -> float:
    """Empirical ``C_0 = max(|grad s|^2 / s^gamma) / (max s)^(2 - gamma)``."""
    g = gradient(s).norm()
    num = np.max(g**2 / s.values**est.gamma)
    return float(num / s.max() ** (2.0 - est.gamma))


@dataclass(frozen=True)
class BoundaryIdentity:
    residual: float
    target: float
    values: np.ndarray
    used: np.ndarray

    @property
    def n_used(self) -> int:
        return int(np.count_nonzero(self.used))


def _log_psi_derivative(s: ScalarField, est: EstimateSpec):
    """Frame components of ``grad log Psi`` from discrete first and second
    derivatives of ``u``; ``ell`` enters in closed form."""
    dom = s.domain
    ell = ell_field(dom).values
    l_r, _ = ell_gradient(dom)
    u = _u_field(s)
    g = gradient(u)
    hs = hessian(u)
    n2 = g.radial**2 + g.azimuthal**2
    with np.errstate(divide="ignore", invalid="ignore"):
        d_r = 2.0 * (g.radial * hs.t11 + g.azimuthal * hs.t12) / n2 + est.beta * l_r / ell - est.gamma * g.radial / u.values
        d_p = 2.0 * (g.radial * hs.t12 + g.azimuthal * hs.t22) / n2 - est.gamma * g.azimuthal / u.values
    return d_r, d_p, g


def boundary_identity(
    s: ScalarField, est: EstimateSpec, rel_threshold: float = DEGENERATE_REL, abs_threshold: float = DEGENERATE_ABS
) -> BoundaryIdentity:
    """Max over non-degenerate boundary nodes of ``|d_mu log Psi + gamma cot(theta)|``.

    Raises
    ------
    AllNodesDegenerate
        The tangential gradient of ``u`` vanishes on the whole circle (for
        example for rotationally symmetric ``s``).
    """
    d_r, _, g = _log_psi_derivative(s, est)
    tangential = np.abs(g.azimuthal[-1])
    full = g.norm()[-1]
    top = float(tangential.max())
    if top < abs_threshold:
        raise AllNodesDegenerate(f"|grad u| < {abs_threshold:g} on the whole boundary circle")
    used = (full >= abs_threshold) & (tangential >= rel_threshold * top)
    target = -est.gamma / math.tan(s.domain.theta)
    vals = d_r[-1]
    return BoundaryIdentity(
        residual=float(np.max(np.abs(vals[used] - target))), target=target, values=vals, used=used
    )


@dataclass(frozen=True)
class GeometricQuantities:
    R: float
    H: float
    r_in: float
    r_out: float
    h_mesh: np.ndarray
    h_formula: np.ndarray
    s_min: float

    @property
    def h_min(self) -> float:
        return float(self.h_formula.min())

    @property
    def h_max(self) -> float:
        return float(self.h_formula.max())

    @property
    def h_agreement(self) -> float:
        """``max |h_mesh - h_formula| / max h_formula``."""
        return float(np.max(np.abs(self.h_mesh - self.h_formula)) / self.h_max)


def geometric_quantities(s: ScalarField, surface: EmbeddedSurface) -> GeometricQuantities:
    """``R``, ``H``, ``r_in``, ``r_out`` and the base-body support function two ways.

    The base ``Omega`` is bounded by the boundary loop projected to
    ``x_3 = 0``.  Its support function in direction ``u = (cos phi_j, sin phi_j)``
    is computed (a) from the polygon and (b) as ``s(theta, phi_j) / sin(theta)``.
    """
    dom = s.domain
    loop = surface.vertices[surface.boundary_loop, :2]
    radii = np.linalg.norm(loop, axis=1)
    phi = dom.grid.phi_values
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    h_mesh = np.max(dirs @ loop.T, axis=1)
    h_formula = s.boundary / math.sin(dom.theta)
    return GeometricQuantities(
        R=s.max(),
        H=float(surface.vertices[:, 2].max()),
        r_in=float(radii.min()),
        r_out=float(radii.max()),
        h_mesh=h_mesh,
        h_formula=h_formula,
        s_min=s.min(),
    )


def base_body_gradient_bound(geo: GeometricQuantities, theta: float, est: EstimateSpec, c0: float):
    """``(max |grad h|^2 / h^gamma, C_0 sin(theta)^gamma R^(2-gamma))`` on the base.

    ``grad h`` is ``dh/dphi`` of the polygon support function by periodic
    central differences.
    """
    h = geo.h_mesh
    dq = 2.0 * math.pi / h.size
    dh = (np.roll(h, -1) - np.roll(h, 1)) / (2.0 * dq)
    lhs = float(np.max(dh**2 / h**est.gamma))
    rhs = c0 * math.sin(theta) ** est.gamma * geo.R ** (2.0 - est.gamma)
    return lhs, rhs


@dataclass(frozen=True)
class ChainCheck:
    name: str
    lhs: float
    rhs: float
    slack: float

    @property
    def margin(self) -> float:
        """``rhs - lhs``; an inequality ``lhs <= rhs``."""
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.slack


def inequality_chain(
    geo: GeometricQuantities, theta: float, h: float, est: EstimateSpec | None = None, c0: float | None = None
) -> list[ChainCheck]:
    """The parameter-free inequalities, each with slack ``10 h`` relative to its scale."""
    t = 10.0 * h

    def check(name, lhs, rhs):
        return ChainCheck(name, float(lhs), float(rhs), t * max(abs(lhs), abs(rhs)))

    out = [
        check("R <= r_out + H", geo.R, geo.r_out + geo.H),
        check("H <= tan(theta) r_in", geo.H, math.tan(theta) * geo.r_in),
        check("min s >= H cos(theta)", geo.H * math.cos(theta), geo.s_min),
    ]
    if est is not None and c0 is not None:
        lhs, rhs = base_body_gradient_bound(geo, theta, est, c0)
        out.append(check("|grad h|^2/h^gamma <= C0 sin^gamma R^(2-gamma)", lhs, rhs))
    return out


@dataclass(frozen=True)
class Stationarity:
    node: tuple[int, int]
    residual: float
    h: float

    @property
    def constant(self) -> float:
        """``residual / h``."""
        return self.residual / self.h


def interior_stationarity(s: ScalarField, est: EstimateSpec) -> Stationarity:
    """``|grad log Psi|`` at the discrete interior maximum of ``Psi``.

    Raises
    ------
    AllNodesDegenerate
        ``Psi`` vanishes identically.
    MaxOnBoundary
        The maximum sits on the boundary circle.
    """
    psi = psi_field(s, est).values
    top = float(psi.max())
    if not top > DEGENERATE_ABS**2:
        raise AllNodesDegenerate("Psi vanishes identically")
    i, j = np.unravel_index(int(np.argmax(psi)), psi.shape)
    if i == s.domain.grid.n_rho - 1:
        raise MaxOnBoundary(f"max of Psi on the boundary at phi = {s.domain.grid.phi_values[j]:.4f}")
    d_r, d_p, _ = _log_psi_derivative(s, est)
    return Stationarity(node=(int(i), int(j)), residual=float(math.hypot(d_r[i, j], d_p[i, j])), h=s.domain.h)


@dataclass
class EstimateReport:
    theta: float
    k: int
    p: float
    gamma: float
    n_rho: int
    n_phi: int
    h: float
    max_psi: float
    gradient_ratio: float
    boundary_identity_residual: float
    boundary_nodes_used: int
    geometric: dict[str, float]
    chain_flags: dict[str, bool]
    chain_margins: dict[str, float]
    empirical_c: float
    empirical_c0: float
    empirical_c1: float
    h_agreement: float
    psi_argmax: str
    stationarity_residual: float
    notes: list[str] = field(default_factory=list)

    CSV_FIELDS = (
        "theta", "k", "p", "gamma", "n_rho", "n_phi", "h", "max_psi", "gradient_ratio",
        "boundary_identity_residual", "boundary_nodes_used", "R", "H", "r_in", "r_out", "h_min", "h_max",
        "h_agreement", "empirical_c", "empirical_c0", "empirical_c1", "chain_ok", "psi_argmax",
        "stationarity_residual",
    )  # fmt: skip

    @property
    def chain_ok(self) -> bool:
        return all(self.chain_flags.values())

    def row(self) -> dict[str, object]:
        flat = {**self.__dict__, **self.geometric, "chain_ok": int(self.chain_ok)}
        return {k: _fmt(flat[k]) for k in self.CSV_FIELDS}

    def to_text(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.row().items()]
        for name, ok in self.chain_flags.items():
            lines.append(f"chain[{name}]: {'pass' if ok else 'FAIL'} margin {self.chain_margins[name]:.6g}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        if header:
            w.writeheader()
        w.writerow(self.row())
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def estimate_report(s: ScalarField, surface: EmbeddedSurface, est: EstimateSpec) -> EstimateReport:
    """Run every check for one ``gamma`` and collect the results."""
    dom = s.domain
    notes = []
    psi = psi_field(s, est)
    c0 = gradient_estimate_ratio(s, est)
    try:
        bi = boundary_identity(s, est)
        bres, bused = bi.residual, bi.n_used
    except AllNodesDegenerate as exc:
        bres, bused = math.nan, 0
        notes.append(f"boundary identity: {exc}")
    try:
        st = interior_stationarity(s, est)
        where, sres = "interior", st.residual
    except MaxOnBoundary:
        where, sres = "boundary", math.nan
    except AllNodesDegenerate as exc:
        where, sres = "degenerate", math.nan
        notes.append(f"stationarity: {exc}")
    geo = geometric_quantities(s, surface)
    chain = inequality_chain(geo, dom.theta, dom.h, est, c0)
    return EstimateReport(
        theta=dom.theta,
        k=est.k,
        p=est.p,
        gamma=est.gamma,
        n_rho=dom.grid.n_rho,
        n_phi=dom.grid.n_phi,
        h=dom.h,
        max_psi=psi.max(),
        gradient_ratio=c0,
        boundary_identity_residual=bres,
        boundary_nodes_used=bused,
        geometric={"R": geo.R, "H": geo.H, "r_in": geo.r_in, "r_out": geo.r_out, "h_min": geo.h_min, "h_max": geo.h_max},
        chain_flags={c.name: c.passed for c in chain},
        chain_margins={c.name: c.margin for c in chain},
        empirical_c=geo.r_out / geo.r_in,
        empirical_c0=geo.R,
        empirical_c1=geo.H / geo.r_in ** (2.0 + (1.0 - est.p) / est.k),
        h_agreement=geo.h_agreement,
        psi_argmax=where,
        stationarity_residual=sres,
        notes=notes,
    )
