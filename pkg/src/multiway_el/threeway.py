"""Modified MEL for the mean of a three-way array ``X_ijt``.

Pseudo values delete one index (row, column or slab) at a time with
``n = N + M + T``.  The corrected factor subtracts the three families of
two-index deletion terms and adds back the three-index deletion term:

    G_tilde G_tilde' = mean V_l(theta_hat) V_l(theta_hat)'
                       - (1/n) {sum Q_ll10 Q' + sum Q_0l1l2 Q' + sum Q_l0l2 Q'}
                       + (1/n) sum Q_ll1l2 Q'.

None of the Q terms carries a finite-sample factor.  Both variance factors
are built from pseudo values at ``theta_hat``, so ``G_tilde`` does not depend
on the evaluation point (unlike the two-way version).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import el_core
from .data import ThreeWayArray
from .mel import ConfidenceSet, PseudoValueSet, _crossing, _psd_factor, chi2_threshold, lower_factor

__all__ = [
    "ThreeWayCorrection",
    "ThreeWayMEL",
    "threeway_mmel_statistic",
    "threeway_pseudo_values",
]

#: Q_ll1l2 grids larger than this many floats are accumulated slab by slab.
DEFAULT_MEMORY_BUDGET = 4_000_000


@dataclass
class ThreeWayCorrection:
    Q_ll10: np.ndarray
    Q_l0l2: np.ndarray
    Q_0l1l2: np.ndarray
    Q_ll1l2: np.ndarray | None  # None when streamed
    qq_pairs: np.ndarray
    qq_triple: np.ndarray
    gamma_hat: np.ndarray
    gamma_tilde: np.ndarray
    leave_out_count: int
    clipped: bool = False


class ThreeWayMEL:
    def __init__(self, array: ThreeWayArray, tolerance: float = el_core.DEFAULT_TOLERANCE,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET):
        self.array = array
        self.tolerance = tolerance
        self.memory_budget = memory_budget
        self.theta_hat = array.full_mean()
        self._one = array.leave_one_means()
        self._corr = {}

    @property
    def n(self) -> int:
        return self.array.n

    def pseudo_values(self, theta) -> PseudoValueSet:
        th = np.atleast_1d(np.asarray(theta, float))
        S = self.theta_hat - th
        S_l = np.vstack(self._one) - th
        n = self.n
        return PseudoValueSet(th, S, S_l, n * S - (n - 1) * S_l)

    def correction(self, clip: bool = False, keep_triple: bool | None = None) -> ThreeWayCorrection:
        if clip in self._corr and keep_triple is None:
            return self._corr[clip]
        a = self.array
        N, M, T = a.extents
        d = a.d
        n = self.n
        th = self.theta_hat
        r1, c1, s1 = self._one
        ij, it, jt = a.leave_two_means()
        q_ij = n * th - (n - 1) * (r1[:, None] + c1[None, :]) + (n - 2) * ij
        q_it = n * th - (n - 1) * (r1[:, None] + s1[None, :]) + (n - 2) * it
        q_jt = n * th - (n - 1) * (c1[:, None] + s1[None, :]) + (n - 2) * jt
        qq_pairs = sum(_outer_sum(q) for q in (q_ij, q_jt, q_it))

        if keep_triple is None:
            keep_triple = N * M * T * d * d <= self.memory_budget
        qq_triple = np.zeros((d, d))
        q3_full = np.empty((N, M, T, d)) if keep_triple else None
        step = max(1, self.memory_budget // max(1, M * T * d * d))
        for lo in range(0, N, step):
            sl = slice(lo, min(N, lo + step))
            three = _leave_three_block(a, sl)
            q3 = (n * th
                  - (n - 1) * (r1[sl, None, None] + c1[None, :, None] + s1[None, None, :])
                  + (n - 2) * (ij[sl, :, None] + jt[None, :, :] + it[sl, None, :])
                  - (n - 3) * three)
            qq_triple += _outer_sum(q3)
            if keep_triple:
                q3_full[sl] = q3

        v_hat = self.pseudo_values(th).V
        base = v_hat.T @ v_hat / n
        g_hat = _psd_factor(base)
        g_tilde, clipped = lower_factor(base - qq_pairs / n + qq_triple / n, clip,
                                        "three-way corrected variance factor")
        count = N + M + T + N * M + N * T + M * T + N * M * T
        corr = ThreeWayCorrection(q_ij, q_it, q_jt, q3_full, qq_pairs, qq_triple,
                                  g_hat, g_tilde, count, clipped)
        self._corr[clip] = corr
        return corr

    def modified_pseudo_values(self, theta, clip: bool = False) -> np.ndarray:
        corr = self.correction(clip)
        v_hat = self.pseudo_values(self.theta_hat).V
        diff = v_hat - self.pseudo_values(theta).V
        moved = linalg.solve_triangular(corr.gamma_tilde, diff.T, lower=True)
        return v_hat - (corr.gamma_hat @ moved).T

    def mel_statistic(self, theta) -> float:
        return el_core.el_statistic(self.pseudo_values(theta).V, self.tolerance)

    def mmel_statistic(self, theta, clip: bool = False) -> float:
        return el_core.el_statistic(self.modified_pseudo_values(theta, clip), self.tolerance)

    def statistic(self, kind: str, theta, clip: bool = False) -> float:
        if kind == "mel":
            return self.mel_statistic(theta)
        if kind == "mmel":
            return self.mmel_statistic(theta, clip)
        raise ValueError(f"statistic kind {kind!r} is not available for three-way data")

    def mmw_matrix(self, clip: bool = False) -> np.ndarray:
        g = self.correction(clip).gamma_tilde
        return g @ g.T

    def confidence_set(self, level: float = 0.95, kind: str = "mmel",
                       clip: bool = False) -> ConfidenceSet:
        d = self.array.d
        thr = chi2_threshold(level, d)

        def stat(t):
            return self.statistic(kind, np.atleast_1d(t), clip)

        if d > 1:
            return ConfidenceSet(d, level, kind, self.theta_hat, thr,
                                 predicate=lambda t: stat(t) <= thr)
        try:
            se = float(np.sqrt(self.mmw_matrix()[0, 0] / self.n))
        except Exception:
            v = self.pseudo_values(self.theta_hat).V
            se = float(np.sqrt(np.mean(v ** 2) / self.n))
        se = se if se > 0 else 1.0
        th = float(self.theta_hat[0])
        lo, f1 = _crossing(stat, th, -1.0, 8.0 * se, thr)
        hi, f2 = _crossing(stat, th, 1.0, 8.0 * se, thr)
        return ConfidenceSet(1, level, kind, self.theta_hat, thr, lo, hi, f1 or f2, clip)


def _outer_sum(q: np.ndarray) -> np.ndarray:
    flat = q.reshape(-1, q.shape[-1])
    return flat.T @ flat


def _leave_three_block(a: ThreeWayArray, rows: slice) -> np.ndarray:
    N, M, T = a.extents
    s_i, s_j, s_t, s_ij, s_it, s_jt, tot = a._margins
    kept = (tot
            - s_i[rows, None, None] - s_j[None, :, None] - s_t[None, None, :]
            + s_ij[rows, :, None] + s_it[rows, None, :] + s_jt[None, :, :]
            - a.cells[rows])
    return kept / ((N - 1) * (M - 1) * (T - 1))


def threeway_pseudo_values(array: ThreeWayArray, theta) -> PseudoValueSet:
    return ThreeWayMEL(array).pseudo_values(theta)


def threeway_mmel_statistic(array: ThreeWayArray, theta, clip: bool = False) -> float:
    return ThreeWayMEL(array).mmel_statistic(theta, clip)
