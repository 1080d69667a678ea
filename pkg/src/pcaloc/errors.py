"""Exception types raised across the library."""


class PCALocError(Exception):
    """Base class for all library errors."""


class ZeroDistance(PCALocError):
    """A candidate location coincides with a sensor or reference point."""


class DuplicateLocation(PCALocError):
    """Two candidate locations are closer than the duplicate epsilon."""


class RankDeficientSteering(PCALocError):
    """A subarray steering matrix (or a Gram matrix) is numerically singular."""


# Shorter alias used by the b-estimators.
RankDeficient = RankDeficientSteering


class SingularHadamardGram(PCALocError):
    """The Hadamard-product Gram matrix of the exact ML solution is singular."""


class SingularCovariance(PCALocError):
    """The sample covariance cannot be inverted even after diagonal loading."""


class InvalidCorrelation(PCALocError):
    """A signal correlation matrix is not Hermitian positive semidefinite."""


class ZeroBlock(PCALocError):
    """A subarray data block is identically zero and cannot be normalized."""


class AllInvalid(PCALocError):
    """Every grid point produced an invalid cost."""


class NoProgress(PCALocError):
    """Alternating projection could not place a source during initialization."""


class ConfigError(PCALocError):
    """The experiment configuration is malformed."""
