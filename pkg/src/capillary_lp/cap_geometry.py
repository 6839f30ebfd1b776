"""The spherical cap domain, its polar grid, and basic fields on it.

The cap is parametrised by geodesic polar coordinates ``(rho, phi)`` about the
north pole of the unit sphere, ``0 <= rho <= theta``.  A point with these
coordinates is ``x = (sin rho cos phi, sin rho sin phi, cos rho)`` on the
sphere, and the corresponding cap point is ``zeta = x - cos(theta) e_3``.

Nodal fields are stored as ``(n_rho, n_phi)`` arrays in row-major order
(ring index first).  Row 0 is the pole; it holds one shared value replicated
across all azimuths.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "CapDomain",
    "PolarGrid",
    "MetricData",
    "ScalarField",
    "make_domain",
    "ell_field",
    "ell_profile",
    "ell_gradient",
    "node_weights",
    "reflect",
    "integrate",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class PolarGrid:
    """Uniform grid in polar angle and azimuth on ``[0, theta] x [0, 2 pi)``."""

    theta: float
    n_rho: int
    n_phi: int

    @cached_property
    def rho_values(self) -> np.ndarray:
        rho = np.linspace(0.0, self.theta, self.n_rho)
        rho[-1] = self.theta
        return rho

    @cached_property
    def phi_values(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def pole_node(self) -> int:
        return 0

    @property
    def h_rho(self) -> float:
        return self.theta / (self.n_rho - 1)

    @property
    def h_phi(self) -> float:
        return 2.0 * np.pi / self.n_phi

    @property
    def h(self) -> float:
        """Largest geodesic grid spacing (used for discretisation slack)."""
        return max(self.h_rho, math.sin(self.theta) * self.h_phi)

    @property
    def n_nodes(self) -> int:
        """Number of distinct nodes (the pole counted once)."""
        return 1 + (self.n_rho - 1) * self.n_phi

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rho, self.n_phi)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(rho, phi)`` arrays of shape ``(n_rho, n_phi)``."""
        return np.meshgrid(self.rho_values, self.phi_values, indexing="ij")

    @cached_property
    def partner(self) -> np.ndarray:
        """Azimuth index of the reflection partner of each column."""
        return (np.arange(self.n_phi) + self.n_phi // 2) % self.n_phi


@dataclass(frozen=True)
class MetricData:
    """Round metric ``g = d rho^2 + sin^2 rho d phi^2`` sampled on the grid."""

    g_rr: np.ndarray
    g_pp: np.ndarray
    # Nonzero Christoffel symbols: Gamma^rho_{phi phi} and Gamma^phi_{rho phi}.
    gamma_r_pp: np.ndarray
    gamma_p_rp: np.ndarray
    area_element: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class CapDomain:
    """The cap ``C_theta`` in ``R^{n+1}`` together with its discretisation."""

    theta: float
    n: int
    grid: PolarGrid

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def h(self) -> float:
        return self.grid.h

    @cached_property
    def metric(self) -> MetricData:
        rho, _ = self.grid.mesh
        sin = np.sin(rho)
        cos = np.cos(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = np.where(sin > 0, cos / sin, np.nan)
        return MetricData(
            g_rr=np.ones_like(rho),
            g_pp=sin**2,
            gamma_r_pp=-sin * cos,
            gamma_p_rp=cot,
            area_element=sin,
            weights=_cell_weights(self.grid),
        )

    @cached_property
    def sphere_points(self) -> np.ndarray:
        """Unit-sphere points ``x = zeta + cos(theta) e_3``, shape ``(n_rho, n_phi, 3)``."""
        rho, phi = self.grid.mesh
        return np.stack(
            [np.sin(rho) * np.cos(phi), np.sin(rho) * np.sin(phi), np.cos(rho)], axis=-1
        )

    @cached_property
    def cap_points(self) -> np.ndarray:
        """Cap points ``zeta``, shape ``(n_rho, n_phi, 3)``."""
        pts = self.sphere_points.copy()
        pts[..., 2] -= math.cos(self.theta)
        return pts

    def field(self, values, positive: bool = False) -> "ScalarField":
        return ScalarField(self, values, positive=positive)

    def from_function(self, func, positive: bool = False) -> "ScalarField":
        """Sample ``func(rho, phi)`` at every node."""
        rho, phi = self.grid.mesh
        return ScalarField(self, np.broadcast_to(func(rho, phi), self.shape), positive=positive)

    def even_from_function(self, func, positive: bool = False) -> "ScalarField":
        """Sample ``func`` on half the azimuths and copy to reflection partners.

        The result is exactly even, whereas sampling an even formula at
        ``phi`` and ``phi + pi`` generally differs in the last bit.
        """
        rho, phi = self.grid.mesh
        half = self.grid.n_phi // 2
        vals = np.empty(self.shape)
        vals[:, :half] = np.broadcast_to(func(rho, phi), self.shape)[:, :half]
        vals[:, half:] = vals[:, :half]
        return ScalarField(self, vals, positive=positive)


def _cell_weights(grid: PolarGrid) -> np.ndarray:
    # Exact areas of the polar cells around each node: pole cap of radius h/2,
    # annuli of width h, and a half annulus on the boundary ring.
    h = grid.h_rho
    rho = grid.rho_values
    lo = np.clip(rho - 0.5 * h, 0.0, None)
    hi = np.clip(rho + 0.5 * h, None, grid.theta)
    ring_area = 2.0 * np.pi * (np.cos(lo) - np.cos(hi))
    w = np.repeat((ring_area / grid.n_phi)[:, None], grid.n_phi, axis=1)
    return w


class ScalarField:
    """Nodal values of a real function on the cap grid.

    The pole row is averaged on construction so every field is single valued
    there.  Values are stored read-only.
    """

    __slots__ = ("domain", "values")

    def __init__(self, domain: CapDomain, values, positive: bool = False):
        arr = np.array(values, dtype=float)
        if arr.shape != domain.shape:
            raise ValueError(f"field shape {arr.shape} does not match grid {domain.shape}")
        if not np.all(arr[0, :] == arr[0, 0]):
            arr[0, :] = arr[0, :].mean()
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        if positive and arr.min() <= 0.0:
            raise ValueError(f"field must be positive, min = {arr.min():.3e}")
        arr.setflags(write=False)
        self.domain = domain
        self.values = arr

    @classmethod
    def from_nodes(cls, domain: CapDomain, nodes: np.ndarray, positive: bool = False):
        n_phi = domain.grid.n_phi
        full = np.empty(domain.shape)
        full[0, :] = nodes[0]
        full[1:, :] = np.asarray(nodes[1:]).reshape(-1, n_phi)
        return cls(domain, full, positive=positive)

    def nodes(self) -> np.ndarray:
        """Distinct nodal values: the pole followed by the rings in row-major order."""
        return np.concatenate([self.values[0, :1], self.values[1:, :].ravel()])

    @property
    def boundary(self) -> np.ndarray:
        return self.values[-1, :]

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def __repr__(self) -> str:
        return (
            f"ScalarField(shape={self.values.shape}, min={self.values.min():.6g}, "
            f"max={self.values.max():.6g})"
        )


def make_domain(theta: float, n: int = 2, n_rho: int = 64, n_phi: int = 128) -> CapDomain:
    """Build the cap ``C_theta`` with a polar grid of ``n_rho x n_phi`` nodes.

    Parameters
    ----------
    theta : float
        Contact angle in radians, strictly between 0 and pi/2.
    n : int
        Intrinsic dimension of the cap.  Only ``n = 2`` is supported.
    n_rho, n_phi : int
        Node counts in polar angle (including pole and boundary) and azimuth.
        ``n_phi`` must be even so the reflection pairs nodes exactly.
    """
    theta = float(theta)
    if not (0.0 < theta < math.pi / 2):
        raise ValueError("theta must lie in (0, pi/2)")
    if n != 2:
        raise ValueError(f"only n = 2 is supported, got n = {n}")
    if n_rho < 8 or n_phi < 8:
        raise ValueError("n_rho and n_phi must both be at least 8")
    if n_phi % 2:
        raise ValueError("n_phi must be even so that the reflection maps nodes to nodes")
    return CapDomain(theta=theta, n=n, grid=PolarGrid(theta=theta, n_rho=int(n_rho), n_phi=int(n_phi)))


def ell_profile(theta: float, rho):
    """Closed form of the model support function, ``1 - cos(theta) cos(rho)``."""
    return 1.0 - math.cos(theta) * np.cos(rho)


def ell_field(domain: CapDomain) -> ScalarField:
    """The capillary support function of the model cap, evaluated in closed form."""
    rho, _ = domain.grid.mesh
    return ScalarField(domain, ell_profile(domain.theta, rho), positive=True)


def ell_gradient(domain: CapDomain) -> tuple[np.ndarray, np.ndarray]:
    """Frame components of the gradient of ell; the azimuthal part vanishes."""
    rho, _ = domain.grid.mesh
    return math.cos(domain.theta) * np.sin(rho), np.zeros(domain.shape)


def reflect(domain: CapDomain, f: ScalarField) -> ScalarField:
    """Pull back ``f`` by the reflection ``x -> (-x_1, -x_2, x_3)``.

    In polar coordinates this is ``phi -> phi + pi``, an exact node permutation.
    """
    return ScalarField(domain, f.values[:, domain.grid.partner])


def integrate(domain: CapDomain, f: ScalarField) -> float:
    """Integrate ``f`` against the area element using exact polar cell areas."""
    vals = f.values if isinstance(f, ScalarField) else np.asarray(f)
    w = domain.metric.weights
    half = domain.grid.n_phi // 2
    # Pole: one node, whose cell is the full polar cap.
    total = vals[0, 0] * w[0].sum()
    # Reflection partners are added first so the result is bitwise invariant
    # under reflect().
    paired = vals[1:, :half] + vals[1:, half:]
    for i, row in enumerate(paired, start=1):
        total += w[i, 0] * float(np.sum(row))
    return float(total)


def node_weights(domain: CapDomain) -> np.ndarray:
    """Quadrature weights on the distinct nodes (pole first)."""
    w = domain.metric.weights
    return np.concatenate([[w[0].sum()], w[1:].ravel()])


def write_field_csv(path, f: ScalarField) -> Path:
    """Write ``f`` as ``rho,phi,value`` rows, pole once, then rings row-major."""
    path = Path(path)
    rho = f.domain.grid.rho_values
    phi = f.domain.grid.phi_values
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "phi", "value"])
        writer.writerow([_fmt(rho[0]), _fmt(phi[0]), _fmt(f.values[0, 0])])
        for i in range(1, len(rho)):
            for j in range(len(phi)):
                writer.writerow([_fmt(rho[i]), _fmt(phi[j]), _fmt(f.values[i, j])])
    return path


def read_field_csv(path, domain: CapDomain, positive: bool = False) -> ScalarField:
    """Read a field written by :func:`write_field_csv` onto ``domain``."""
    path = Path(path)
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["rho", "phi", "value"]:
            raise ValueError(f"{path}: expected header 'rho,phi,value', got {header!r}")
        values = [float(row[2]) for row in reader if row]
    if len(values) != domain.grid.n_nodes:
        raise ValueError(
            f"{path}: {len(values)} rows but the grid has {domain.grid.n_nodes} nodes"
        )
    return ScalarField.from_nodes(domain, np.array(values), positive=positive)


def _fmt(x: float) -> str:
    return f"{x:.17g}"
