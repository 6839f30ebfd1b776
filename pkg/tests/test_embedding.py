import math

import numpy as np
import pytest

from capillary_lp.cap_geometry import ScalarField, ell_field, make_domain
from capillary_lp.curvature import CurvatureSpec, Kind
from capillary_lp.embedding import (
    boundary_heights,
    convexity_violations,
    evenness_defect,
    export_mesh,
    inverse_gauss_map,
    normal_consistency,
    read_mesh,
    surface_curvature_check,
)
from capillary_lp.exceptions import NonConvex
from capillary_lp.solver import model_phi

from conftest import make_spec


@pytest.fixture(scope="module")
def cap():
    d = make_domain(math.pi / 3, 2, 64, 128)
    return d, inverse_gauss_map(ell_field(d))


def test_model_cap_is_the_unit_sphere(cap):
    d, surf = cap
    centre = np.array([0.0, 0.0, -math.cos(d.theta)])
    assert np.max(np.abs(np.linalg.norm(surf.vertices - centre, axis=1) - 1.0)) <= 1e-6


def test_pole_vertex(cap):
    d, surf = cap
    assert np.allclose(surf.vertices[0], [0.0, 0.0, 1.0 - math.cos(d.theta)], atol=1e-12)


def test_vertex_count(cap):
    d, surf = cap
    assert surf.n_vertices == 64 * 128 - 127
    assert surf.boundary_loop.size == 128
    assert surf.faces.max() == surf.n_vertices - 1


def test_scaling_homogeneity():
    d = make_domain(math.pi / 4, 2, 33, 64)
    ell = ell_field(d)
    a = inverse_gauss_map(ell)
    b = inverse_gauss_map(ScalarField(d, 2.5 * ell.values))
    assert np.allclose(b.vertices, 2.5 * a.vertices, rtol=0, atol=1e-12)
    assert np.array_equal(a.normals, b.normals)


def test_boundary_on_support_plane(cap, bump_solution):
    d, surf = cap
    assert np.abs(boundary_heights(surf)).max() <= 10 * d.h * 0.75
    s = bump_solution.s
    bs = inverse_gauss_map(s)
    assert np.abs(boundary_heights(bs)).max() <= 10 * s.domain.h * s.max()


def test_evenness(cap, bump_solution):
    _, surf = cap
    assert evenness_defect(surf) <= 1e-12
    assert evenness_defect(inverse_gauss_map(bump_solution.s)) <= 1e-12


def test_convex_and_consistent(cap, bump_solution):
    d, surf = cap
    assert convexity_violations(surf) == 0
    assert normal_consistency(surf) < 10 * d.h
    bs = inverse_gauss_map(bump_solution.s)
    assert convexity_violations(bs) == 0
    assert normal_consistency(bs) < 10 * bump_solution.s.domain.h


def test_nonconvex_rejected():
    d = make_domain(math.pi / 4, 2, 33, 64)
    s = d.from_function(lambda r, p: 1.0 + 3.0 * np.cos(2 * r) + 0 * p)
    with pytest.raises(NonConvex):
        inverse_gauss_map(s)
    surf = inverse_gauss_map(s, check=False)
    assert convexity_violations(surf) > 0


@pytest.mark.parametrize("kind", ["sigma_k", "quotient"])
def test_curvature_check_model_family(kind):
    defects = []
    for nr, nq in [(32, 64), (64, 128)]:
        d = make_domain(math.pi / 3, 2, nr, nq)
        spec = make_spec(d, model_phi(d, CurvatureSpec(Kind(kind), 1), 1.5), 1.5, kind)
        chk = surface_curvature_check(inverse_gauss_map(ell_field(d)), spec)
        defects.append(chk.max_defect)
    assert defects[-1] <= 0.05
    assert defects[1] < defects[0]


def test_curvature_check_scaled_sphere():
    # s = 2 ell is a sphere of radius 2; S_1 = 1.
    d = make_domain(math.pi / 4, 2, 64, 128)
    spec = make_spec(d, model_phi(d, CurvatureSpec(Kind.QuotientSigma, 1), 2.0, 2.0), 2.0, "quotient")
    chk = surface_curvature_check(inverse_gauss_map(ScalarField(d, 2 * ell_field(d).values)), spec)
    assert chk.max_defect <= 0.05
    assert chk.vertices.min() >= 1 + 2 * 128


def test_curvature_check_solved_instance(bump_solution):
    b = bump_solution
    chk = surface_curvature_check(inverse_gauss_map(b.s), b.spec, b.multiplier)
    assert chk.max_defect <= 0.05


def test_curvature_check_collar():
    d = make_domain(math.pi / 4, 2, 17, 32)
    spec = make_spec(d, model_phi(d, CurvatureSpec(Kind.SigmaK, 1), 1.5), 1.5)
    with pytest.raises(ValueError, match="collar"):
        surface_curvature_check(inverse_gauss_map(ell_field(d)), spec, collar=1)


def test_export_roundtrip(tmp_path, cap):
    d, surf = cap
    path = export_mesh(surf, tmp_path / "cap.mesh")
    text = path.read_text()
    assert text.startswith("# capillary surface mesh")
    verts, faces, loop = read_mesh(path)
    assert verts.shape == (surf.n_vertices, 3)
    assert np.array_equal(faces, surf.faces)
    assert np.array_equal(loop, surf.boundary_loop)
    # Nine significant digits.
    assert np.max(np.abs(verts - surf.vertices)) <= 1e-8
    centre = np.array([0.0, 0.0, -math.cos(d.theta)])
    assert np.max(np.abs(np.linalg.norm(verts - centre, axis=1) - 1.0)) <= 1e-6


def test_export_errors(tmp_path, cap):
    _, surf = cap
    with pytest.raises(ValueError):
        export_mesh(surf, "")
    with pytest.raises(OSError, match="missing"):
        export_mesh(surf, tmp_path / "missing" / "x.mesh")
