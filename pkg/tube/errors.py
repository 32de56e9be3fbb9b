from typing import Optional


class TubeError(Exception):
    """Base class for every error raised by the tube library."""


# --- Spec validation ---
class SpecError(TubeError):
    constraint = "spec"

    def __init__(self, message: str, constraint: Optional[str] = None):
        super().__init__(message)
        if constraint:
            self.constraint = constraint


class BadDimension(SpecError):
    constraint = "dimension"


class BadBias(SpecError):
    constraint = "bias"


class BadSource(SpecError):
    constraint = "source"


class OddCircumference(SpecError):
    constraint = "m+1 must be an even integer"


class SingularCircumference(SpecError):
    constraint = "(m+1) mod 4 = 0 is singular for triangular tubes"


class AxialOutOfRange(SpecError):
    constraint = "axial coordinate"


# --- Evaluation ---
class NotInterior(TubeError):
    pass


class ZeroDenominator(TubeError):
    pass


# --- Oracles ---
class OracleError(TubeError):
    pass


class TooLarge(OracleError):
    pass


class NoConvergence(OracleError):
    pass
