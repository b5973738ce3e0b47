"""Exception types shared across the package."""


class NumericError(Exception):
    """Base class for numerical failures (CLI maps these to exit code 3)."""


class PoleError(NumericError, ValueError):
    """Evaluation requested at a pole of the function."""


class ConvergenceError(NumericError):
    """A truncated series failed to certify its tail within the term cap."""


class QuadratureError(NumericError):
    """Step-halving disagreement in a line quadrature."""


class VerificationError(NumericError):
    """A built-in cross-check (closed form vs. independent numeric route) failed."""


class DegenerateError(NumericError):
    """An interval or normalizer degenerated (e.g. a denominator interval containing 0)."""
