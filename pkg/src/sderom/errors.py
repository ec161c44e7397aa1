"""Exception types shared across the package.

Container errors are split so corrupted files are distinguishable from
dimension bugs; numeric failures carry enough context to locate the
offending window or step.
"""


class ContainerError(Exception):
    """Base class for dataset/checkpoint container problems."""


class MalformedManifestError(ContainerError):
    """The manifest line is not valid JSON or lacks required fields."""


class TruncatedPayloadError(ContainerError):
    """The payload section ends before a declared array does."""


class DimensionMismatchError(ContainerError):
    """Declared dimensions disagree with stored array shapes."""


class InvalidDatasetError(ContainerError):
    """Dataset violates its invariants (empty, inconsistent dims, ...)."""


class ConfigError(Exception):
    """Config file failed schema validation (unknown key, bad type, ...)."""


class SingularKernelError(Exception):
    """Kernel Gram matrix factorization failed (numerically singular)."""


class NonFiniteError(Exception):
    """A loss, gradient, or state became NaN/Inf."""


class DivergedIntegrationError(Exception):
    """Time integration produced a non-finite state."""


class UnstableSolverError(Exception):
    """Requested step size violates the stability limit of the marcher."""


class UndefinedMetricError(Exception):
    """Relative error metric undefined (zero-norm reference row)."""


class DegenerateDensityError(Exception):
    """Transition density undefined (zero dispersion)."""


class RankDeficientError(Exception):
    """Requested more modes than the data supports."""


class IllConditionedLibraryError(Exception):
    """Normal equations of the regression library are singular."""
