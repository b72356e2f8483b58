"""Variance estimators for the two-way mean and the Wald machinery around them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import TwoWayArray
from .errors import SingularVariance
from .estimators import Estimator
from .mel import MultiwayEL

__all__ = [
    "VarianceEstimate",
    "eww_variance",
    "iid_variance",
    "mmw_variance",
    "wald_interval",
    "wald_statistic",
]


@dataclass
class VarianceEstimate:
    matrix: np.ndarray
    kind: str
    N: int
    M: int
    clipped: bool = False
    psd: bool = field(init=False, default=True)

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        self.psd = bool(np.all(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T)) >= 0))

    @property
    def se(self) -> np.ndarray:
        """Standard errors; NaN where the diagonal is negative."""
        diag = np.diag(self.matrix)
        with np.errstate(invalid="ignore"):
            return np.where(diag >= 0, np.sqrt(np.abs(diag)), np.nan)


def eww_variance(array: TwoWayArray, theta_hat=None) -> VarianceEstimate:
    """Two-way Eicker-White cluster-robust variance of the cell mean.

    Row-cluster plus column-cluster cross products minus the double-counted
    cell terms, all over ``N^2 M^2``; computed from row and column sums of the
    centred cells in O(NM d^2).
    """
    th = array.full_mean() if theta_hat is None else np.atleast_1d(theta_hat)
    e = array.cells - th
    r = e.sum(axis=1)
    c = e.sum(axis=0)
    flat = e.reshape(-1, e.shape[-1])
    mat = (r.T @ r + c.T @ c - flat.T @ flat) / (array.N * array.M) ** 2
    return VarianceEstimate(mat, "EWW", array.N, array.M)


def mmw_variance(array: TwoWayArray, spec: Estimator | None = None,
                 clip: bool = False) -> VarianceEstimate:
    """Corrected multiway variance ``G_tilde G_tilde' / n`` at ``theta_hat``."""
    mel = spec if isinstance(spec, MultiwayEL) else MultiwayEL(spec, array)
    mat = mel.mmw_matrix(clip) / mel.n
    return VarianceEstimate(mat, "mMW", array.N, array.M, clipped=clip)


def iid_variance(array: TwoWayArray, theta_hat=None) -> VarianceEstimate:
    """Cellwise sample covariance (NM - 1 denominator) divided by NM."""
    th = array.full_mean() if theta_hat is None else np.atleast_1d(theta_hat)
    flat = (array.cells - th).reshape(-1, array.d)
    nm = flat.shape[0]
    return VarianceEstimate(flat.T @ flat / (nm - 1) / nm, "IID", array.N, array.M)


def wald_statistic(theta_hat, theta, variance) -> float:
    """``(theta_hat - theta)' V^{-1} (theta_hat - theta)``."""
    mat = variance.matrix if isinstance(variance, VarianceEstimate) else np.atleast_2d(variance)
    diff = np.atleast_1d(np.asarray(theta_hat, float) - np.asarray(theta, float))
    try:
        sol = np.linalg.solve(mat, diff)
    except np.linalg.LinAlgError:
        raise SingularVariance("variance matrix is singular") from None
    if not np.all(np.isfinite(sol)):
        raise SingularVariance("variance matrix is singular")
    return float(diff @ sol)


def wald_interval(theta_hat, variance, level: float = 0.95, index: int = 0):
    """``theta_hat_j +/- z * sqrt(V_jj)``.

    Raises :class:`SingularVariance` when ``V_jj`` is negative, which the two
    robust estimators can produce in small samples.
    """
    mat = variance.matrix if isinstance(variance, VarianceEstimate) else np.atleast_2d(variance)
    v = mat[index, index]
    if not v >= 0:
        raise SingularVariance(f"negative variance {v:.3g} on the diagonal")
    z = stats.norm.ppf(0.5 + level / 2)
    th = float(np.atleast_1d(theta_hat)[index])
    half = z * np.sqrt(v)
    return th - half, th + half
