"""Exception hierarchy shared by all modules."""


class OuterApproxError(Exception):
    """Base class for every error raised by this package."""


class CapabilityError(OuterApproxError):
    """Request outside the supported envelope (dimension, problem family)."""


class Infeasible(OuterApproxError):
    pass


class Unbounded(OuterApproxError):
    pass


class MaxIter(OuterApproxError):
    pass


class NotSpd(OuterApproxError):
    pass


class ZeroNormal(OuterApproxError):
    pass


class NoNormalsYet(OuterApproxError):
    pass


class NotNested(OuterApproxError):
    pass


class DegenerateCut(OuterApproxError):
    """The reference point already lies in the set; no separating cut exists."""


class NoVertices(OuterApproxError):
    pass


class UnboundedInit(OuterApproxError):
    pass


class TooFewPoints(OuterApproxError):
    pass


class MaxIterReached(OuterApproxError):
    pass
