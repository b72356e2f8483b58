"""Second-order terms of the scalar degenerate-case expansions.

For ``t > 0`` both statistics satisfy

    P(sqrt(stat) <= t) = Phi(t) - c(N, M, t) phi(t) + o(1/n),

and these helpers return ``c(N, M, t) * phi(t)`` for the Wald statistic with
the two-way Eicker-White variance and for the modified MEL, with and without
the finite sample factor on the deletion terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import norm

__all__ = ["EdgeworthDiagnostic", "edgeworth_terms", "mmel_correction", "wald_correction"]

_ROOT_TERM = 2.0 * (math.sqrt(2.0) - 1.0)


def wald_correction(N: int, M: int, t: float) -> float:
    h = 1.0 / N + 1.0 / M
    return (1.5 * h * t + 0.5 * h * t ** 3) * norm.pdf(t)


def mmel_correction(N: int, M: int, t: float, use_c_factor: bool = True) -> float:
    h = 1.0 / N + 1.0 / M
    n = N + M
    if use_c_factor:
        linear = 1.5 * h - 3.0 / N - 3.0 / M + 5.0 / n
    else:
        linear = 1.5 * h - 1.0 / N - 1.0 / M + 1.0 / n
    cubic = 0.5 * (h - _ROOT_TERM / n)
    return (linear * t + cubic * t ** 3) * norm.pdf(t)


@dataclass(frozen=True)
class EdgeworthDiagnostic:
    N: int
    M: int
    t: float
    wald: float
    mmel: float
    mmel_noc: float

    @property
    def mmel_closer(self) -> bool:
        return abs(self.mmel) < abs(self.wald) and abs(self.mmel_noc) < abs(self.wald)


def edgeworth_terms(N: int, M: int, t: float) -> EdgeworthDiagnostic:
    if t <= 0:
        raise ValueError("t must be positive")
    return EdgeworthDiagnostic(N, M, t, wald_correction(N, M, t),
                               mmel_correction(N, M, t, True),
                               mmel_correction(N, M, t, False))
