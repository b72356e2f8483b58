"""Two-way multiway empirical likelihood (MEL) and its modified version.

Pseudo values delete one whole row or column at a time:

    V_l(theta) = n S(theta) - (n - 1) S_l(theta),   n = N + M,

with rows first (``l < N``) and columns after.  The modified statistic
re-centres them at ``theta_hat`` and rescales the departure with the ratio
of two variance factors,

    V^m_l(theta) = V_l(theta_hat) - G_hat G_tilde^{-1} {V_l(theta_hat) - V_l(theta)},

where ``G_hat G_hat' = mean V_l(theta_hat) V_l(theta_hat)'`` and
``G_tilde G_tilde'`` subtracts the row-and-column deletion terms ``Q_{l l1}``
from ``mean V_l(theta) V_l(theta)'``.  Both factors are lower Cholesky
factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, stats

from . import el_core
from .data import TwoWayArray
from .errors import BracketFailure, CorrectionNotPD
from .estimators import Estimator, LeaveOutValues, Mean

__all__ = [
    "STATISTIC_KINDS",
    "ConfidenceSet",
    "CorrectionTerms",
    "MultiwayEL",
    "PseudoValueSet",
    "c_factor",
    "chi2_threshold",
    "grid_trace",
    "invert_confidence_interval",
    "lower_factor",
    "mel_statistic",
    "mmel_statistic",
    "pseudo_values",
    "q_terms",
]

STATISTIC_KINDS = ("mel", "mmel", "mmel-noc")

_BRACKET_SE = 8.0
_MAX_DOUBLINGS = 60
_SCAN_POINTS = 64


def c_factor(N: int, M: int) -> float:
    """Finite sample factor ``(N-1)(M-1)n / (NM(n-2))`` with ``n = N + M``."""
    n = N + M
    return (N - 1) * (M - 1) * n / (N * M * (n - 2))


def chi2_threshold(level: float, d: int = 1) -> float:
    return float(stats.chi2.ppf(level, d))


def lower_factor(mat: np.ndarray, clip: bool = False, what: str = "matrix"):
    """Lower-triangular ``L`` with ``L L' = mat``.

    Raises :class:`CorrectionNotPD` when ``mat`` has a non-positive
    eigenvalue, unless ``clip`` is set, in which case eigenvalues are floored
    at ``1e-12 * trace`` first.  Returns ``(L, clipped)``.
    """
    mat = 0.5 * (mat + mat.T)
    try:
        return linalg.cholesky(mat, lower=True), False
    except linalg.LinAlgError:
        if not clip:
            eig = np.linalg.eigvalsh(mat)
            raise CorrectionNotPD(
                f"{what} is not positive definite (smallest eigenvalue {eig[0]:.3g})") from None
    w, U = np.linalg.eigh(mat)
    floor = 1e-12 * max(abs(np.trace(mat)), np.finfo(float).tiny)
    fixed = (U * np.maximum(w, floor)) @ U.T
    return linalg.cholesky(0.5 * (fixed + fixed.T), lower=True), True


def _psd_factor(mat: np.ndarray) -> np.ndarray:
    # Cholesky when possible; otherwise a symmetric square root of a PSD matrix
    mat = 0.5 * (mat + mat.T)
    try:
        return linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError:
        w, U = np.linalg.eigh(mat)
        return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


@dataclass
class PseudoValueSet:
    theta: np.ndarray
    S: np.ndarray
    S_l: np.ndarray
    V: np.ndarray

    @property
    def n(self) -> int:
        return self.V.shape[0]


@dataclass
class CorrectionTerms:
    Q: np.ndarray
    C_factor: float
    gamma_hat: np.ndarray
    gamma_tilde: np.ndarray
    clipped: bool = False


@dataclass
class ConfidenceSet:
    """Confidence set from inverting a statistic or a Wald variance.

    For ``d == 1`` the set is ``[lo, hi]``; ``possibly_non_interval`` marks
    statistics that dipped back below the threshold outside the reported
    crossing.  For ``d > 1`` only ``contains`` (and an optional ``grid``
    trace) is available.
    """

    d: int
    level: float
    kind: str
    estimate: np.ndarray
    threshold: float
    lo: float | None = None
    hi: float | None = None
    possibly_non_interval: bool = False
    clipped: bool = False
    predicate: Callable | None = field(default=None, repr=False)
    grid: tuple | None = field(default=None, repr=False)

    def contains(self, theta) -> bool:
        if self.d == 1 and self.lo is not None:
            t = float(np.ravel(theta)[0])
            return self.lo <= t <= self.hi
        return bool(self.predicate(np.asarray(theta, float)))


class MultiwayEL:
    """MEL machinery for one estimator on one two-way array.

    Leave-out estimates (including the N*M row/column pair deletions) are
    computed once and reused across evaluation points, which matters for
    refit-based estimators and for interval inversion.
    """

    def __init__(self, estimator: Estimator | None, array: TwoWayArray,
                 tolerance: float = el_core.DEFAULT_TOLERANCE):
        self.estimator = Mean() if estimator is None else estimator
        self.array = array
        self.tolerance = tolerance
        self._estimates: LeaveOutValues | None = None
        self._theta_hat = None

    @property
    def N(self) -> int:
        return self.array.N

    @property
    def M(self) -> int:
        return self.array.M

    @property
    def n(self) -> int:
        return self.array.n

    def _get_estimates(self, pairs: bool) -> LeaveOutValues:
        est = self._estimates
        if est is None or (pairs and est.pairs is None):
            est = self.estimator.leave_out_estimates(self.array, pairs)
            self._estimates = est
        return est

    @property
    def theta_hat(self) -> np.ndarray:
        if self._theta_hat is None:
            if self.estimator.moment_based:
                self._theta_hat = np.atleast_1d(self.estimator.fit(self.array))
            else:
                self._theta_hat = np.atleast_1d(self._get_estimates(False).full)
        return self._theta_hat

    def s_values(self, theta, pairs: bool = False) -> LeaveOutValues:
        if self.estimator.moment_based:
            return self.estimator.s_values(self.array, theta, pairs)
        return self._get_estimates(pairs).shifted(theta)

    def pseudo_values(self, theta) -> PseudoValueSet:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        s = self.s_values(theta)
        S_l = np.vstack([s.rows, s.cols])
        n = self.n
        return PseudoValueSet(theta, s.full, S_l, n * s.full - (n - 1) * S_l)

    def q_terms(self, theta=None, use_c_factor: bool = True) -> np.ndarray:
        """(N, M, d) grid of ``Q_{l l1}``; ``theta`` cancels for estimate-based kinds."""
        if theta is None:
            theta = self.theta_hat
        s = self.s_values(np.atleast_1d(np.asarray(theta, float)), pairs=True)
        n = self.n
        core = (n * s.full - (n - 1) * (s.rows[:, None, :] + s.cols[None, :, :])
                + (n - 2) * s.pairs)
        return (c_factor(self.N, self.M) if use_c_factor else 1.0) * core

    def correction(self, theta, use_c_factor: bool = True,
                   clip: bool = False) -> CorrectionTerms:
        theta = np.atleast_1d(np.asarray(theta, float))
        n = self.n
        v_hat = self.pseudo_values(self.theta_hat).V
        v_th = self.pseudo_values(theta).V
        Q = self.q_terms(theta, use_c_factor)
        qq = np.einsum("ijk,ijl->kl", Q, Q) / n
        g_hat = _psd_factor(v_hat.T @ v_hat / n)
        g_tilde, clipped = lower_factor(v_th.T @ v_th / n - qq, clip,
                                        "corrected variance factor")
        return CorrectionTerms(Q, c_factor(self.N, self.M) if use_c_factor else 1.0,
                               g_hat, g_tilde, clipped)

    def modified_pseudo_values(self, theta, use_c_factor: bool = True,
                               clip: bool = False) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, float))
        corr = self.correction(theta, use_c_factor, clip)
        v_hat = self.pseudo_values(self.theta_hat).V
        diff = v_hat - self.pseudo_values(theta).V
        moved = linalg.solve_triangular(corr.gamma_tilde, diff.T, lower=True)
        return v_hat - (corr.gamma_hat @ moved).T

    def mel_statistic(self, theta) -> float:
        return el_core.el_statistic(self.pseudo_values(theta).V, self.tolerance)

    def mmel_statistic(self, theta, use_c_factor: bool = True, clip: bool = False) -> float:
        vm = self.modified_pseudo_values(theta, use_c_factor, clip)
        return el_core.el_statistic(vm, self.tolerance)

    def statistic(self, kind: str, theta, clip: bool = False) -> float:
        if kind == "mel":
            return self.mel_statistic(theta)
        if kind == "mmel":
            return self.mmel_statistic(theta, True, clip)
        if kind == "mmel-noc":
            return self.mmel_statistic(theta, False, clip)
        raise ValueError(f"unknown statistic kind {kind!r}")

    def mmw_matrix(self, clip: bool = False, use_c_factor: bool = True) -> np.ndarray:
        """``G_tilde G_tilde'`` at ``theta_hat`` (not yet divided by n)."""
        corr = self.correction(self.theta_hat, use_c_factor, clip)
        return corr.gamma_tilde @ corr.gamma_tilde.T

    def _scale_guess(self) -> np.ndarray:
        try:
            var = np.diag(self.mmw_matrix()) / self.n
        except CorrectionNotPD:
            v = self.pseudo_values(self.theta_hat).V
            var = np.mean(v ** 2, axis=0) / self.n
        se = np.sqrt(np.clip(var, 0.0, None))
        return np.where(se > 0, se, 1.0)

    def confidence_set(self, level: float = 0.95, kind: str = "mmel",
                       clip: bool = False) -> ConfidenceSet:
        theta_hat = self.theta_hat
        d = len(theta_hat)
        thr = chi2_threshold(level, d)

        def stat(t):
            return self.statistic(kind, np.atleast_1d(t), clip)

        if d > 1:
            return ConfidenceSet(d, level, kind, theta_hat, thr,
                                 predicate=lambda t: stat(t) <= thr)
        se = float(self._scale_guess()[0])
        th = float(theta_hat[0])
        lo, flag_lo = _crossing(stat, th, -1.0, _BRACKET_SE * se, thr)
        hi, flag_hi = _crossing(stat, th, 1.0, _BRACKET_SE * se, thr)
        return ConfidenceSet(1, level, kind, theta_hat, thr, lo, hi,
                             possibly_non_interval=flag_lo or flag_hi, clipped=clip)


def _crossing(stat, center: float, sign: float, width: float, thr: float):
    """Innermost point on one side of ``center`` where ``stat`` reaches ``thr``."""
    for _ in range(_MAX_DOUBLINGS):
        if stat(center + sign * width) > thr:
            break
        width *= 2.0
    else:
        raise BracketFailure(f"statistic stayed below {thr:.4g} out to distance {width:.3g}")
    grid = np.linspace(0.0, width, _SCAN_POINTS + 1)[1:]
    values = np.array([stat(center + sign * g) for g in grid])
    first = int(np.argmax(values > thr))
    non_interval = bool(np.any(values[first + 1:] <= thr))
    a = 0.0 if first == 0 else grid[first - 1]
    b = grid[first]
    scale = max(abs(center), width)
    while b - a > 1e-8 * max(scale, 1e-300) and b - a > 0:
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        if stat(center + sign * mid) > thr:
            b = mid
        else:
            a = mid
    return center + sign * 0.5 * (a + b), non_interval


def pseudo_values(spec: Estimator | None, array: TwoWayArray, theta) -> PseudoValueSet:
    return MultiwayEL(spec, array).pseudo_values(theta)


def q_terms(spec: Estimator | None, array: TwoWayArray, theta=None,
            use_c_factor: bool = True) -> np.ndarray:
    return MultiwayEL(spec, array).q_terms(theta, use_c_factor)


def mel_statistic(spec: Estimator | None, array: TwoWayArray, theta) -> float:
    return MultiwayEL(spec, array).mel_statistic(theta)


def mmel_statistic(spec: Estimator | None, array: TwoWayArray, theta,
                   use_c_factor: bool = True, clip: bool = False) -> float:
    return MultiwayEL(spec, array).mmel_statistic(theta, use_c_factor, clip)


def invert_confidence_interval(spec: Estimator | None, array: TwoWayArray,
                               level: float = 0.95, kind: str = "mmel",
                               clip: bool = False) -> ConfidenceSet:
    return MultiwayEL(spec, array).confidence_set(level, kind, clip)


def grid_trace(cs: ConfidenceSet, axes: list) -> np.ndarray:
    """Evaluate membership of a d>1 set on the rectangular grid ``axes``."""
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    inside = np.array([cs.contains(p) for p in pts]).reshape(mesh[0].shape)
    cs.grid = (tuple(axes), inside)
    return inside

