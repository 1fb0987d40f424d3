class CascadeError(Exception):
    """Base class for every error raised by the toolkit services"""


class MomentEvaluationError(CascadeError):
    """A law moment could not be evaluated (nonconvergent quadrature, missing phi)"""


class DisorderDomainError(CascadeError):
    """An operation was called outside its admissible domain"""


class NumericalError(CascadeError):
    """A root finder failed to bracket or to reach its tolerance"""


class ResourceCapError(CascadeError):
    """A requested depth or truncation exceeds the configured cap"""


class DegenerateRealizationError(CascadeError):
    """A finite-n realization cannot be normalized (D_n <= 0)"""


class DegenerateSampleError(CascadeError):
    """A limit sample carries no mass (no Poisson centers)"""


class ExcessiveResamplingError(CascadeError):
    """Too many nonpositive D_N approximations had to be discarded"""


class ToleranceUnachievableError(CascadeError):
    """The Poisson series tail cannot be brought below tolerance within the cap"""


class VertexRangeError(CascadeError):
    """A vertex lies beyond the stored depth, or a point lies outside I(root)"""


class LatticeLawError(CascadeError):
    """A lattice law was used where the non-lattice hypothesis is required"""


class InvariantViolation(CascadeError):
    """An exact structural identity failed beyond its tolerance"""
