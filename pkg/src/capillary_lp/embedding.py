"""Reconstruction of the capillary hypersurface from its support function.

For a point ``x`` of the unit sphere over the cap (``zeta = x - cos(theta) e_3``)
the surface point with normal ``x`` is::

    X = grad s + s x,

the usual support-function inverse, with the gradient taken on the sphere.
On the boundary circle ``<X, e_3> = -sin(theta) d_rho s + cos(theta) s``,
which vanishes under the Robin condition.

The gradient used here is spectral in ``phi`` and fourth order in ``rho``;
the mesh is only as accurate as ``s``, but the reconstruction step itself
adds almost nothing on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cap_geometry import ScalarField
from .curvature import Kind
from .discrete_calculus import tau
from .exceptions import NonConvex

__all__ = [
    "EmbeddedSurface",
    "CurvatureCheck",
    "inverse_gauss_map",
    "surface_curvature_check",
    "export_mesh",
    "read_mesh",
    "boundary_heights",
    "evenness_defect",
    "normal_consistency",
    "convexity_violations",
]


@dataclass(frozen=True)
class EmbeddedSurface:
    """Vertices and normals at the distinct grid nodes (pole first, then rings)."""

    vertices: np.ndarray
    normals: np.ndarray
    faces: np.ndarray
    boundary_loop: np.ndarray
    support: ScalarField

    @property
    def domain(self):
        return self.support.domain

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    def ring(self, i: int) -> np.ndarray:
        """Vertex indices of ring ``i`` (``i = 0`` is the pole)."""
        nq = self.domain.grid.n_phi
        if i == 0:
            return np.zeros(1, dtype=int)
        return 1 + (i - 1) * nq + np.arange(nq)


def _spectral_phi(values: np.ndarray) -> np.ndarray:
    """``d/dphi`` of each row by FFT; the Nyquist mode is dropped."""
    nq = values.shape[-1]
    k = np.fft.rfftfreq(nq, d=1.0 / nq)
    if nq % 2 == 0:
        k[-1] = 0.0
    return np.fft.irfft(1j * k * np.fft.rfft(values, axis=-1), n=nq, axis=-1)


def _radial_fourth(values: np.ndarray, h: float, partner: np.ndarray) -> np.ndarray:
    """Fourth-order ``d/drho`` on rings ``1..n_rho-1``.

    Rings ``-1`` and ``-2`` are ring ``1`` and ``2`` seen through the pole,
    i.e. shifted by ``pi`` in azimuth.
    """
    nr = values.shape[0]
    ext = np.concatenate([values[2:0:-1][:, partner], values], axis=0)
    d = np.empty_like(values)
    c = ext
    # ext index = ring index + 2
    for i in range(1, nr - 2):
        d[i] = (-c[i + 4] + 8.0 * c[i + 3] - 8.0 * c[i + 1] + c[i]) / (12.0 * h)
    f = values
    n = nr - 1
    d[n - 1] = (3.0 * f[n] + 10.0 * f[n - 1] - 18.0 * f[n - 2] + 6.0 * f[n - 3] - f[n - 4]) / (12.0 * h)
    d[n] = (25.0 * f[n] - 48.0 * f[n - 1] + 36.0 * f[n - 2] - 16.0 * f[n - 3] + 3.0 * f[n - 4]) / (12.0 * h)
    d[0] = 0.0
    return d


def _ambient_gradient(s: ScalarField) -> np.ndarray:
    """Ambient gradient on the unit sphere, shape ``(n_rho, n_phi, 3)``."""
    grid = s.domain.grid
    rho, phi = grid.mesh
    vals = s.values
    d_rho = _radial_fourth(vals, grid.h_rho, grid.partner)
    d_phi = _spectral_phi(vals)
    e_rho = np.stack([np.cos(rho) * np.cos(phi), np.cos(rho) * np.sin(phi), -np.sin(rho)], axis=-1)
    e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        g_phi = np.where(rho > 0, d_phi / np.sin(rho), 0.0)
    grad = d_rho[..., None] * e_rho + g_phi[..., None] * e_phi
    # Pole: mode 1 of rings 1 and 2, combined to cancel the cubic term.
    nq = grid.n_phi
    h = grid.h_rho
    c = np.cos(phi[0])
    sn = np.sin(phi[0])
    a1 = 2.0 / nq * np.array([vals[1] @ c, vals[1] @ sn])
    a2 = 2.0 / nq * np.array([vals[2] @ c, vals[2] @ sn])
    g0 = (8.0 * a1 - a2) / (6.0 * h)
    grad[0] = np.array([g0[0], g0[1], 0.0])
    return grad


def _faces(nr: int, nq: int, verts: np.ndarray | None = None) -> np.ndarray:
    """Pole fan plus two triangles per grid quad, outward oriented.

    With ``verts`` each quad is split along the diagonal that keeps the
    shared edge convex: four points on a strictly convex surface are in
    general not coplanar, and only one diagonal lies on their convex hull.
    """
    j = np.arange(nq)
    fan = np.stack([np.zeros(nq, dtype=np.int64), 1 + j, 1 + (j + 1) % nq], axis=1)
    i = np.arange(1, nr - 1)[:, None]
    a = (1 + (i - 1) * nq + j).ravel()
    b = (1 + i * nq + j).ravel()
    c = (1 + i * nq + (j + 1) % nq).ravel()
    d = (1 + (i - 1) * nq + (j + 1) % nq).ravel()
    flip = np.zeros(a.shape, dtype=bool)
    if verts is not None:
        n = np.cross(verts[b] - verts[a], verts[c] - verts[a])
        above = np.sum((verts[d] - verts[a]) * n, axis=1)
        flip = above > 1e-12 * np.linalg.norm(n, axis=1) * float(np.max(np.abs(verts)))
    t1 = np.where(flip[:, None], np.stack([a, b, d], 1), np.stack([a, b, c], 1))
    t2 = np.where(flip[:, None], np.stack([b, c, d], 1), np.stack([a, c, d], 1))
    quads = np.stack([t1, t2], axis=1).reshape(-1, 3)
    return np.concatenate([fan, quads]).astype(np.int64)


def _edge_pairs(f: np.ndarray):
    """Interior edges as ``(start, end, face1, opp1, face2, opp2)`` index arrays.

    ``face1`` traverses the edge as ``start -> end``; ``face2`` the reverse.
    """
    m = len(f)
    start = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    end = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    opp = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    owner = np.tile(np.arange(m), 3)
    lo, hi = np.minimum(start, end), np.maximum(start, end)
    order = np.lexsort((start > end, hi, lo))
    lo, hi, start, end, opp, owner = lo[order], hi[order], start[order], end[order], opp[order], owner[order]
    first = np.flatnonzero((lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1]))
    second = first + 1
    return start[first], end[first], owner[first], opp[first], owner[second], opp[second]


def _reflex(verts, faces, tol):
    a, b, f1, o1, f2, o2 = _edge_pairs(faces)
    n = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]], verts[faces[:, 2]] - verts[faces[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    d12 = np.sum((verts[o2] - verts[a]) * n[f1], axis=1)
    d21 = np.sum((verts[o1] - verts[a]) * n[f2], axis=1)
    bad = (d12 > tol) | (d21 > tol)
    return bad, (a, b, f1, o1, f2, o2)


def _convexify(verts, normals, faces, max_passes: int = 100) -> np.ndarray:
    """Flip reflex edges until the triangulation is locally convex.

    Thin cells near the pole can make a grid-aligned triangulation of points
    in convex position non-convex although the points themselves are fine.
    The surface is a graph over its base, so flipping converges to the
    convex triangulation of the vertices.
    """
    faces = faces.copy()
    tol = 1e-10 * float(np.max(np.abs(verts)))
    for _ in range(max_passes):
        bad, (a, b, f1, o1, f2, o2) = _reflex(verts, faces, tol)
        idx = np.flatnonzero(bad)
        if idx.size == 0:
            break
        used = np.zeros(len(faces), dtype=bool)
        flipped = 0
        for e in idx:
            g1, g2 = f1[e], f2[e]
            if used[g1] or used[g2]:
                continue
            t1 = (a[e], o2[e], o1[e])
            t2 = (o2[e], b[e], o1[e])
            ok = True
            for t in (t1, t2):
                nt = np.cross(verts[t[1]] - verts[t[0]], verts[t[2]] - verts[t[0]])
                if nt @ normals[list(t)].sum(axis=0) <= 0.0:
                    ok = False
            if not ok:
                continue
            faces[g1], faces[g2] = t1, t2
            used[g1] = used[g2] = True
            flipped += 1
        if flipped == 0:
            break
    return faces


def inverse_gauss_map(s: ScalarField, check: bool = True) -> EmbeddedSurface:
    """Reconstruct the surface whose capillary support function is ``s``.

    Raises
    ------
    NonConvex
        ``tau[s]`` is not positive definite somewhere, so the map is not a
        diffeomorphism onto the cap.
    """
    dom = s.domain
    if check:
        lo = tau(s).eigenvalues()[0]
        if lo.min() <= 0.0:
            raise NonConvex(f"tau[s] is not positive definite (min eigenvalue {lo.min():.3e})")
    x = dom.sphere_points
    grad = _ambient_gradient(s)
    X = grad + s.values[..., None] * x
    nr, nq = dom.grid.n_rho, dom.grid.n_phi
    verts = np.concatenate([X[0, :1], X[1:].reshape(-1, 3)])
    normals = np.concatenate([x[0, :1], x[1:].reshape(-1, 3)])
    loop = 1 + (nr - 2) * nq + np.arange(nq)
    return EmbeddedSurface(
        vertices=verts,
        normals=normals,
        faces=_convexify(verts, normals, _faces(nr, nq, verts)),
        boundary_loop=loop,
        support=s,
    )


def boundary_heights(surface: EmbeddedSurface) -> np.ndarray:
    """``x_3`` on the boundary loop; zero in the continuum."""
    return surface.vertices[surface.boundary_loop, 2]


def evenness_defect(surface: EmbeddedSurface) -> float:
    """Max distance between ``R(X_v)`` and the vertex at the reflected node."""
    dom = surface.domain
    nq = dom.grid.n_phi
    nr = dom.grid.n_rho
    perm = np.concatenate([[0], (1 + np.arange((nr - 1) * nq)).reshape(nr - 1, nq)[:, dom.grid.partner].ravel()])
    refl = surface.vertices * np.array([-1.0, -1.0, 1.0])
    return float(np.max(np.linalg.norm(refl - surface.vertices[perm], axis=1)))


@dataclass(frozen=True)
class CurvatureCheck:
    max_defect: float
    defect: np.ndarray
    vertices: np.ndarray
    normal_angle_max: float


def _fit_frames(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.where(np.abs(normals[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = a - np.sum(a * normals, axis=1)[:, None] * normals
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    return e1, np.cross(normals, e1)


def _quadric_curvatures(points: np.ndarray, origins: np.ndarray, normals: np.ndarray, scale: float):
    """Principal curvatures and normal tilt of ``w = q(x, y)`` fitted per patch.

    ``points`` has shape ``(m, K, 3)``: ``K`` neighbours for each of ``m``
    vertices.  Curvatures are positive for a surface bending away from the
    normal.  Coordinates are divided by ``scale`` to keep the fit well
    conditioned.
    """
    e1, e2 = _fit_frames(normals)
    d = (points - origins[:, None, :]) / scale
    x = np.einsum("mkc,mc->mk", d, e1)
    y = np.einsum("mkc,mc->mk", d, e2)
    w = np.einsum("mkc,mc->mk", d, normals)
    A = np.stack([x * x, x * y, y * y, x, y], axis=-1)
    coef = np.linalg.solve(np.einsum("mki,mkj->mij", A, A), np.einsum("mki,mk->mi", A, w)[..., None])[..., 0]
    a, b, c = coef[:, 0] / scale, coef[:, 1] / scale, coef[:, 2] / scale
    gx, gy = coef[:, 3], coef[:, 4]
    first = np.stack([np.stack([1.0 + gx * gx, gx * gy], -1), np.stack([gx * gy, 1.0 + gy * gy], -1)], -2)
    hess = np.stack([np.stack([2.0 * a, b], -1), np.stack([b, 2.0 * c], -1)], -2)
    second = -hess / np.sqrt(1.0 + gx * gx + gy * gy)[:, None, None]
    kappa = np.sort(np.linalg.eigvals(np.linalg.solve(first, second)).real, axis=-1)
    return kappa, np.arctan(np.hypot(gx, gy))


def _ring_stencil(grid, i: int, rings: int = 2) -> np.ndarray:
    """Neighbour indices ``(n_phi, K)`` for every node of ring ``i``.

    The azimuth window widens near the pole so that each patch stays roughly
    isotropic.
    """
    nq = grid.n_phi
    m = max(rings, int(math.ceil(rings * grid.h_rho / (math.sin(grid.rho_values[i]) * grid.h_phi))))
    m = min(m, nq // 4)
    di = np.repeat(np.arange(-rings, rings + 1), 2 * m + 1)
    dj = np.tile(np.arange(-m, m + 1), 2 * rings + 1)
    j = np.arange(nq)[:, None]
    return 1 + (i + di[None, :] - 1) * nq + (j + dj[None, :]) % nq


def surface_curvature_check(surface: EmbeddedSurface, spec, multiplier: float = 1.0, collar: int = 3) -> CurvatureCheck:
    """Check the curvature equation directly on the mesh.

    Principal curvatures come from a local quadric fit.  For the quotient
    form the defect is ``|phi s^(p-1) S_k(kappa) - 1|``; for the
    ``sigma_k`` form it is ``|sigma_k(1/kappa) / (s^(p-1) phi) - 1|``.  Only
    vertices at least ``collar`` rings from the pole and from the boundary
    are used.
    """
    grid = surface.domain.grid
    nr = grid.n_rho
    if spec.curvature.k != 1 or spec.curvature.n != 2:
        raise ValueError("the mesh check is implemented for n = 2, k = 1")
    if collar < 2:
        raise ValueError("collar must be at least 2 rings")
    s = surface.support.values
    phi = spec.phi.values
    defects, verts, tilt = [], [], 0.0
    for i in range(collar, nr - collar):
        v = surface.ring(i)
        pts = surface.vertices[_ring_stencil(grid, i)]
        kappa, angle = _quadric_curvatures(pts, surface.vertices[v], surface.normals[v], 2.0 * grid.h_rho)
        tilt = max(tilt, float(angle.max()))
        rhs = multiplier * s[i] ** (spec.p - 1.0) * phi[i]
        if spec.curvature.kind is Kind.QuotientSigma:
            d = np.abs(rhs * kappa.sum(axis=-1) - 1.0)
        else:
            d = np.abs((1.0 / kappa).sum(axis=-1) / rhs - 1.0)
        defects.append(d)
        verts.append(v)
    defects = np.concatenate(defects)
    return CurvatureCheck(
        max_defect=float(defects.max()), defect=defects, vertices=np.concatenate(verts), normal_angle_max=tilt
    )


def normal_consistency(surface: EmbeddedSurface) -> float:
    """Max angle between face normals and the mean constructed normal of the face."""
    v = surface.vertices
    f = surface.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    ref = surface.normals[f].mean(axis=1)
    ref /= np.linalg.norm(ref, axis=1)[:, None]
    return float(np.max(np.arccos(np.clip(np.sum(n * ref, axis=1), -1.0, 1.0))))


def convexity_violations(surface: EmbeddedSurface, tol: float | None = None) -> int:
    """Number of interior edges with a reflex dihedral angle.

    An edge shared by faces ``f1`` and ``f2`` is convex when the vertex of
    ``f2`` opposite the edge lies on the inner side of the plane of ``f1``
    (outward normals), up to ``tol`` (default ``1e-10 max |v|``).
    """
    v = surface.vertices
    if tol is None:
        tol = 1e-10 * float(np.max(np.abs(v)))
    bad, _ = _reflex(v, surface.faces, tol)
    return int(np.count_nonzero(bad))


def export_mesh(surface: EmbeddedSurface, path) -> Path:
    """Write ``v``/``f`` lines (9 significant digits, 1-based faces) and the
    boundary loop as a ``# loop`` comment block."""
    if path is None or str(path) == "":
        raise ValueError("export_mesh needs a non-empty path")
    path = Path(path)
    lines = [
        "# capillary surface mesh",
        f"# vertices {surface.n_vertices} faces {surface.faces.shape[0]}",
    ]
    lines += [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in surface.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in surface.faces]
    lines.append("# boundary loop")
    loop = surface.boundary_loop + 1
    for k in range(0, loop.size, 16):
        lines.append("# loop " + " ".join(str(i) for i in loop[k : k + 16]))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"could not write mesh to {path}: {exc}") from exc
    return path


def read_mesh(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a file written by :func:`export_mesh`: ``(vertices, faces, loop)``, 0-based."""
    verts, faces, loop = [], [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("v "):
            verts.append([float(t) for t in line.split()[1:4]])
        elif line.startswith("f "):
            faces.append([int(t) - 1 for t in line.split()[1:4]])
        elif line.startswith("# loop "):
            loop.extend(int(t) - 1 for t in line.split()[2:])
    return np.array(verts), np.array(faces, dtype=np.int64), np.array(loop, dtype=np.int64)
