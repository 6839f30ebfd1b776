"""Capillary L_p Minkowski problems on the spherical cap.

The package solves ``F(tau[s]) = s^(p-1) phi`` for the capillary support
function ``s`` on the cap ``C_theta`` with the Robin condition
``d_mu s = cot(theta) s``, reconstructs the hypersurface and checks the
a priori estimates numerically.
"""

from .cap_geometry import CapDomain, ScalarField, ell_field, make_domain, read_field_csv, write_field_csv
from .curvature import CurvatureSpec, Kind
from .embedding import EmbeddedSurface, export_mesh, inverse_gauss_map, surface_curvature_check
from .exceptions import (
    AllNodesDegenerate,
    CapillaryError,
    ConvexityLost,
    MaxOnBoundary,
    NonAdmissible,
    NonConvex,
    NoConvergence,
    ParameterMismatch,
    SingularLinearization,
)
from .oracle import RadialProfile, compare_to_2d, solve_radial
from .solver import ProblemSpec, SolutionBundle, SolveConfig, model_phi, solve
from .verifier import EstimateReport, EstimateSpec, estimate_report

__version__ = "0.1.0"

__all__ = [
    "CapDomain",
    "ScalarField",
    "ell_field",
    "make_domain",
    "read_field_csv",
    "write_field_csv",
    "CurvatureSpec",
    "Kind",
    "EmbeddedSurface",
    "export_mesh",
    "inverse_gauss_map",
    "surface_curvature_check",
    "AllNodesDegenerate",
    "CapillaryError",
    "ConvexityLost",
    "MaxOnBoundary",
    "NonAdmissible",
    "NonConvex",
    "NoConvergence",
    "ParameterMismatch",
    "SingularLinearization",
    "RadialProfile",
    "compare_to_2d",
    "solve_radial",
    "ProblemSpec",
    "SolutionBundle",
    "SolveConfig",
    "model_phi",
    "solve",
    "EstimateReport",
    "EstimateSpec",
    "estimate_report",
]
