"""Rebuild the hypersurface from a solved support function.

The vertices are ``X = grad s + s x`` on the cap.  The checks are that the
boundary touches the plane ``x_3 = 0``, the mesh is even and convex, and the
principal curvatures estimated on the mesh satisfy the equation.  The
mesh is written to ``bump.mesh`` in the current directory.
"""

import math
import warnings

import numpy as np

from capillary_lp import CurvatureSpec, ProblemSpec, export_mesh, inverse_gauss_map, make_domain, solve
from capillary_lp.config import even_bump
from capillary_lp.embedding import boundary_heights, convexity_violations, evenness_defect, surface_curvature_check
from capillary_lp.verifier import geometric_quantities


def main():
    d = make_domain(math.pi / 4, 2, 65, 128)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = ProblemSpec(d, CurvatureSpec("sigma_k", 1), 1.25, even_bump(d, 0.5, 0.5))
        bundle = solve(spec)
    surf = inverse_gauss_map(bundle.s)
    geo = geometric_quantities(bundle.s, surf)
    print(f"vertices {surf.n_vertices}, faces {len(surf.faces)}")
    print(f"max |x_3| on the boundary  {np.abs(boundary_heights(surf)).max():.2e}")
    print(f"evenness defect            {evenness_defect(surf):.2e}")
    print(f"reflex edges               {convexity_violations(surf)}")
    print(f"curvature defect           {surface_curvature_check(surf, spec, bundle.multiplier).max_defect:.2e}")
    print(f"R {geo.R:.4f}  H {geo.H:.4f}  r_in {geo.r_in:.4f}  r_out {geo.r_out:.4f}")
    print(f"mesh written to {export_mesh(surf, 'bump.mesh')}")


if __name__ == "__main__":
    main()
