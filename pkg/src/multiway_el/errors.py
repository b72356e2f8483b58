"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MultiwayELError(Exception):
    """Base class for all package errors."""


class ELConvergenceError(MultiwayELError):
    """The empirical likelihood dual solver ran out of iterations."""


class CorrectionNotPD(MultiwayELError):
    """The corrected variance factor is not positive definite."""


class SingularVariance(MultiwayELError):
    """A variance matrix could not be inverted."""


class BracketFailure(MultiwayELError):
    """Confidence interval inversion never crossed the critical value."""


class EstimatorError(MultiwayELError):
    """Base class for plug-in estimator failures.

    ``leave_out`` is filled in by the pseudo value builders so the caller can
    tell which row/column deletion broke the fit.
    """

    def __init__(self, message: str, leave_out: tuple | None = None):
        super().__init__(message)
        self.leave_out = leave_out

    def __str__(self) -> str:
        base = super().__str__()
        if self.leave_out is None:
            return base
        return f"{base} (leave-out {self.leave_out})"


class LogitSeparation(EstimatorError):
    pass


class LogitMaxIterations(EstimatorError):
    pass


class GEEConvergenceError(EstimatorError):
    pass


class HTZeroDenominator(EstimatorError):
    pass


class SBMScaleError(MultiwayELError):
    """Scaled block probabilities exceed one."""


class DataFormatError(MultiwayELError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
