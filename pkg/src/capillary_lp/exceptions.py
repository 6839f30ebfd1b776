"""Exception hierarchy shared by the solver and the verification tools."""


class CapillaryError(Exception):
    """Base class for all errors raised by capillary_lp."""


class NonAdmissible(CapillaryError):
    """The symmetric tensor left the ellipticity cone of the curvature function."""


class SingularLinearization(CapillaryError):
    """The Newton linear system could not be solved to the required accuracy."""


class NoConvergence(CapillaryError):
    """Newton iteration hit the iteration cap without meeting the tolerance."""


class ConvexityLost(CapillaryError):
    """Step shortening could not keep the iterate strictly convex."""


class AllNodesDegenerate(CapillaryError):
    """Every boundary node has a vanishing gradient of u = s / ell."""


class MaxOnBoundary(CapillaryError):
    """The discrete maximum of Psi sits on the boundary circle."""


class ParameterMismatch(CapillaryError):
    """Two objects that must describe the same problem disagree on parameters."""


class NonConvex(CapillaryError):
    """``tau[s]`` is not positive definite, so ``s`` does not bound a convex body."""
