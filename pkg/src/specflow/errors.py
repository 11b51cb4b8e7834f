"""Exception hierarchy shared by all modules."""


class SpecflowError(Exception):
    """Base class for domain errors raised by this package."""


class RationalAlphaError(SpecflowError):
    """The continued fraction terminated: the rotation is not ergodic."""


class PrecisionError(SpecflowError):
    """Working precision cannot certify a digit, a floor or a sign."""


class OutOfRangeError(SpecflowError, ValueError):
    pass


class PositivityError(SpecflowError):
    """A roof function is not bounded away from zero."""


class RoofSpecError(SpecflowError, ValueError):
    """Malformed roof description."""


class WindowExceededError(SpecflowError):
    """Query lies outside the validity window of the rational surrogate."""


class DegeneratePairError(SpecflowError):
    pass


class OutOfDeltaError(SpecflowError):
    pass


class SameOrbitError(SpecflowError):
    pass


class ScaleError(SpecflowError):
    """Scale selection needs more continued fraction depth or a larger scan."""


class NoAdmissiblePError(SpecflowError):
    pass


class ZeroJumpSumError(SpecflowError):
    pass


class SingularityError(SpecflowError, ZeroDivisionError):
    pass


class NoReturnError(SpecflowError):
    pass


class StepFailureError(SpecflowError):
    pass


class ConfigError(SpecflowError):
    """Experiment configuration does not validate."""
