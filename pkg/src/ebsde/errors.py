"""Exception types raised by the solver and its diagnostics."""


class EbsdeError(Exception):
    """Base class for all package-specific errors."""


class NotHurwitz(EbsdeError):
    """Some eigenvalue of the drift matrix has real part <= 0."""


class SingularDiffusion(EbsdeError):
    """Diffusion matrix is not invertible within the conditioning tolerance."""


class NonPositiveTime(EbsdeError):
    """A strictly positive elapsed time was required."""


class FactorizationFailure(EbsdeError):
    """A covariance matrix turned out numerically indefinite."""


class QuadratureFailure(EbsdeError):
    """Adaptive integration did not converge."""


class ConfigError(EbsdeError):
    """Invalid scheme or experiment configuration."""


class BranchMismatch(EbsdeError):
    """Contraction-bound branch incompatible with the model's C_A."""


class MarginTooLarge(EbsdeError):
    """Interior margin r leaves no grid nodes."""


class QuadratureDimTooLarge(EbsdeError):
    """Tensor quadrature requested in too high a dimension."""


class DimTooLarge(EbsdeError):
    """Operation only implemented for d = 1."""


class NonConvergence(EbsdeError):
    """Successive quadrature refinements disagree beyond tolerance."""
