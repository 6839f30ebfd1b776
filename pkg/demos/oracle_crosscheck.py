"""Compare the 2-D solver against the 1-D radial solver.

With ``phi = 1`` the solution is rotationally symmetric and solves an ODE
in ``rho``.  The radial solver uses second-order differences on thousands of
nodes, so it serves as an independent reference.
"""

import math
import warnings

import numpy as np

from capillary_lp import CurvatureSpec, ProblemSpec, ScalarField, compare_to_2d, make_domain, solve, solve_radial


def main():
    theta = math.pi / 3
    curvature = CurvatureSpec("sigma_k", 1)
    for p in (1.25, 1.5, 2.0):
        prof = solve_radial(theta, 2, 1, p, 1.0)
        print(f"p = {p}: s(pole) = {prof.s_values[0]:.8f}, s(boundary) = {prof.s_values[-1]:.8f}")
        for nr, nq in ((16, 32), (32, 64), (64, 128)):
            d = make_domain(theta, 2, nr, nq)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                bundle = solve(ProblemSpec(d, curvature, p, ScalarField(d, np.ones(d.shape))))
            print(f"    {nr:4d} x {nq:<4d} relative sup deviation {compare_to_2d(prof, bundle):.3e}")


if __name__ == "__main__":
    main()
