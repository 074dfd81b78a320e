"""Exception taxonomy shared across the package."""


class SocestError(Exception):
    """Base class for all socest errors."""


class InvalidCoeffsError(SocestError):
    """Discrete coefficients outside the invertible region (d2 not in (-1, 1))."""


class NonPhysicalParamsError(SocestError):
    """A recovered circuit parameter is zero or negative."""


class DegenerateUpdateError(SocestError):
    """RLS denominator is non-positive; the covariance is corrupted."""


class IllConditionedError(SocestError):
    """Regression data fails the excitation gate (span or conditioning)."""


class SingularInnovationError(SocestError):
    """Innovation variance h P h' + Rx is non-positive."""


class RiccatiBlowupError(SocestError):
    """H-infinity update lost invertibility or positive definiteness
    (performance bound too aggressive for the current conditioning)."""


class EmptyWindowError(SocestError):
    """Residual window is empty."""


class LengthMismatchError(SocestError):
    """Paired sequences have different lengths."""


class EmptyInputError(SocestError):
    """A run was requested on an empty sample set."""


class MissingReferenceError(SocestError):
    """The requested reference mode cannot be satisfied by the inputs."""


class ConfigError(SocestError):
    """Bad configuration; `key` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class TraceFormatError(SocestError):
    """Input CSV violates the expected schema or sampling regularity."""
