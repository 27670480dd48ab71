"""Exception types shared across the package.

Every named failure mode gets its own class so callers (and the CLI exit-code
mapping) can discriminate without string matching.
"""


class QPWaveError(Exception):
    """Base class for all package-specific errors."""


class EmptyRegion(QPWaveError):
    """A region specification has no member sites."""


class OutOfRegion(QPWaveError):
    """A site was looked up in an index map that does not contain it."""


class InvalidAnchors(QPWaveError):
    """Anchor sites are duplicated or otherwise unusable."""


class PreconditionFailed(QPWaveError):
    """A required certificate or precondition does not hold."""


class NotApplicable(QPWaveError):
    """The requested check is not defined for these inputs (excluded case)."""


class InsufficientResolution(QPWaveError):
    """A sampling grid is too coarse for the requested tolerance."""


class AsymmetricKernel(QPWaveError):
    """A convolution kernel violates the required k -> -k symmetry."""


class Singular(QPWaveError):
    """A matrix is numerically singular.

    Carries ``smallest_singular_value`` when known.
    """

    def __init__(self, message: str, smallest_singular_value: float = float("nan")):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class ComplementSingular(QPWaveError):
    """The complement block of a Schur reduction is not invertible."""


class FrequencyCollapse(QPWaveError):
    """A frequency update produced a nonpositive squared frequency."""


class ResonantBox(QPWaveError):
    """A restricted linearized operator is singular or too ill-conditioned.

    Carries the ``stage``, the condition estimate and the lattice site where
    the near-null vector is largest.
    """

    def __init__(self, message: str, stage: int = -1,
                 condition: float = float("inf"), site=None):
        super().__init__(message)
        self.stage = stage
        self.condition = condition
        self.site = site


class NonConvergence(QPWaveError):
    """The staged iteration stagnated before reaching the residual floor."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class OracleDiverged(QPWaveError):
    """The dense validation Newton iteration failed to converge."""


class InsufficientData(QPWaveError):
    """Not enough support points for a requested fit."""
