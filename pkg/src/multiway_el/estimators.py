"""Plug-in estimators evaluated on a two-way array and its leave-out views.

Two flavours feed the pseudo value machinery:

* estimate-based (``Mean``, ``HorvitzThompson``, ``CompositeLogit``): the
  estimating value is ``S(theta) = theta_hat - theta`` where ``theta_hat`` is
  recomputed on every leave-out view;
* moment-based (``GEEMoment``): ``S(theta)`` is the average of a per-cell
  moment function over the view.

Both report a :class:`LeaveOutValues` bundle for the full sample, each deleted
row, each deleted column and (on request) each deleted row/column pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg, optimize
from scipy.special import expit

from .data import LeaveOut, TwoWayArray
from .errors import (EstimatorError, GEEConvergenceError, HTZeroDenominator,
                     LogitMaxIterations, LogitSeparation)

__all__ = [
    "FAMILIES",
    "CompositeLogit",
    "Estimator",
    "Family",
    "GEEMoment",
    "HorvitzThompson",
    "LeaveOutValues",
    "Mean",
    "estimate",
    "fit_logit",
    "gee_moment",
    "make_estimator",
]


@dataclass
class LeaveOutValues:
    """Values on the full sample and on the leave-row/column(/pair) views."""

    full: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    pairs: np.ndarray | None = None

    def shifted(self, theta) -> LeaveOutValues:
        """Subtract ``theta`` everywhere (estimate -> estimating value)."""
        th = np.asarray(theta, dtype=float)
        return LeaveOutValues(self.full - th, self.rows - th, self.cols - th,
                              None if self.pairs is None else self.pairs - th)


def _mean_values(array: TwoWayArray, pairs: bool) -> LeaveOutValues:
    return LeaveOutValues(array.full_mean(), array.leave_row_means(),
                          array.leave_col_means(),
                          array.leave_pair_means() if pairs else None)


class Estimator:
    """Base class.  Subclasses implement :meth:`fit` at minimum."""

    kind = "base"
    moment_based = False

    def fit(self, view: TwoWayArray, start=None) -> np.ndarray:
        raise NotImplementedError

    def dim(self, array: TwoWayArray) -> int:
        return len(self.fit(array))

    def leave_out_estimates(self, array: TwoWayArray, pairs: bool = False) -> LeaveOutValues:
        """Refit on every leave-out view.  Generic O(NM) refits fallback."""
        full = self.fit(array)
        N, M = array.N, array.M

        def refit(spec):
            try:
                return self.fit(array.view(spec), start=full)
            except EstimatorError as exc:
                exc.leave_out = spec.axes()[:2]
                raise

        rows = np.array([refit(LeaveOut(row=i)) for i in range(N)])
        cols = np.array([refit(LeaveOut(col=j)) for j in range(M)])
        pr = None
        if pairs:
            pr = np.array([[refit(LeaveOut(row=i, col=j)) for j in range(M)]
                           for i in range(N)])
        return LeaveOutValues(full, rows, cols, pr)

    def s_values(self, array: TwoWayArray, theta, pairs: bool = False,
                 estimates: LeaveOutValues | None = None) -> LeaveOutValues:
        """Estimating values ``S(theta)`` on the full sample and leave-out views."""
        if estimates is None:
            estimates = self.leave_out_estimates(array, pairs)
        return estimates.shifted(theta)


class Mean(Estimator):
    """Cell average."""

    kind = "mean"

    def fit(self, view, start=None):
        return view.full_mean()

    def dim(self, array):
        return array.d

    def leave_out_estimates(self, array, pairs=False):
        return _mean_values(array, pairs)


@dataclass
class HorvitzThompson(Estimator):
    """Ratio estimator ``sum(pi^-1 Y) / sum(pi^-1)``.

    ``weight_kind="inverse_probability"`` reads ``pi_ij^-1`` from column
    ``weight_index``.  ``weight_kind="size"`` reads the SSU size ``v_ij`` and
    builds ``pi_ij^-1 = J * H_i * v_ij`` from the population PSU count ``J``
    and per-PSU SSU counts ``H``.
    """

    y_index: int = 0
    weight_index: int = 1
    weight_kind: str = "inverse_probability"
    J: float = 1.0
    H: np.ndarray | None = None

    kind = "horvitz_thompson"

    def __post_init__(self):
        if self.weight_kind not in ("inverse_probability", "size"):
            raise ValueError(f"unknown weight_kind {self.weight_kind!r}")

    def inverse_weights(self, cells: np.ndarray, rows=None) -> np.ndarray:
        w = cells[..., self.weight_index]
        if self.weight_kind == "size":
            H = np.ones(cells.shape[0]) if self.H is None else np.asarray(self.H, float)
            if rows is not None:
                H = H[rows]
            w = self.J * H[:, None] * w
        if np.any(w <= 0):
            raise ValueError("inverse inclusion weights must be strictly positive")
        return w

    def _weighted(self, array: TwoWayArray) -> TwoWayArray:
        w = self.inverse_weights(array.cells)
        return TwoWayArray(np.stack([w * array.cells[..., self.y_index], w], axis=-1))

    def fit(self, view, start=None):
        w = self.inverse_weights(view.cells)
        den = w.sum()
        if den <= 0:
            raise HTZeroDenominator("sum of inverse weights is zero")
        return np.array([(w * view.cells[..., self.y_index]).sum() / den])

    def dim(self, array):
        return 1

    def leave_out_estimates(self, array, pairs=False):
        # a ratio of leave-out sums equals the ratio of leave-out means
        m = _mean_values(self._weighted(array), pairs)

        def ratio(x):
            if np.any(x[..., 1] <= 0):
                raise HTZeroDenominator("sum of inverse weights is zero")
            return x[..., :1] / x[..., 1:]

        return LeaveOutValues(ratio(m.full), ratio(m.rows), ratio(m.cols),
                              None if m.pairs is None else ratio(m.pairs))


def _logit_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    # y*eta - log(1+exp(eta)), stable for large |eta|
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


# fitted |eta| beyond this triggers the exact separation check
_ETA_SUSPECT = 20.0


def _separated(X: np.ndarray, y: np.ndarray) -> bool:
    """Whether some nonzero ``b`` has ``(2y - 1) x'b >= 0`` for every cell.

    Solved as the LP ``max sum (2y-1) x'b`` over the box ``|b| <= 1``; a
    positive optimum means the MLE does not exist.
    """
    s = (2.0 * y - 1.0)[:, None] * X
    res = optimize.linprog(-s.sum(axis=0), A_ub=-s, b_ub=np.zeros(len(y)),
                           bounds=[(-1.0, 1.0)] * X.shape[1], method="highs")
    return res.status == 0 and -res.fun > 1e-9 * max(1.0, np.abs(s).sum())


def fit_logit(X: np.ndarray, y: np.ndarray, start=None, tolerance: float = 1e-9,
              max_iterations: int = 100, bound: float = 1e3, history: list | None = None):
    """Newton-Raphson for the Bernoulli logit log likelihood.

    Convergence is declared when the score, the gradient of the summed log
    likelihood, has norm at most ``tolerance``.  Returns ``(params, score_norm, iterations)``.
    """
    p = X.shape[1]
    beta = np.zeros(p) if start is None else np.array(start, dtype=float)
    eta = X @ beta
    ll = _logit_loglik(eta, y)
    if history is not None:
        history.append(ll)
    for it in range(max_iterations + 1):
        mu = expit(eta)
        score = X.T @ (y - mu)
        gnorm = float(np.linalg.norm(score))
        if gnorm <= tolerance:
            if np.max(np.abs(eta)) > _ETA_SUSPECT and _separated(X, y):
                raise LogitSeparation("responses are (quasi-)separated by the covariates")
            return beta, gnorm, it
        if it == max_iterations:
            break
        info = (X * (mu * (1.0 - mu))[:, None]).T @ X
        try:
            step = linalg.cho_solve(linalg.cho_factor(info, lower=True), score)
        except linalg.LinAlgError:
            raise LogitSeparation("information matrix is singular") from None
        # predicted gain below round-off in ll: the comparison is noise, take the full step
        tiny = 0.5 * float(step @ score) <= 64 * np.finfo(float).eps * max(1.0, abs(ll))
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _logit_loglik(eta_c, y)
            if ll_c >= ll or tiny:
                break
            t *= 0.5
        else:
            raise LogitSeparation("line search failed to increase the likelihood")
        beta, eta, ll = cand, eta_c, ll_c
        if history is not None:
            history.append(ll)
        if np.linalg.norm(beta) > bound:
            raise LogitSeparation(f"parameters diverged past norm {bound:g}")
    raise LogitMaxIterations(f"no convergence in {max_iterations} iterations (score {gnorm:.3g})")


@dataclass
class CompositeLogit(Estimator):
    """Composite ML for ``P(Y_ij = 1) = Lambda(alpha + Z_ij' beta)``.

    Parameters are ordered ``(alpha, beta_1, ..., beta_k)``; ``subvector``
    selects the components reported as the estimate.
    """

    y_index: int = 0
    z_indices: tuple | None = None
    subvector: tuple | None = None
    tolerance: float = 1e-9
    max_iterations: int = 100
    warm_start: bool = True

    kind = "composite_logit"

    def design(self, cells: np.ndarray):
        d = cells.shape[-1]
        z_idx = [k for k in range(d) if k != self.y_index] if self.z_indices is None \
            else list(self.z_indices)
        flat = cells.reshape(-1, d)
        y = flat[:, self.y_index]
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logit responses must be 0/1")
        X = np.column_stack([np.ones(len(y)), flat[:, z_idx]])
        return X, y

    def fit_full(self, view: TwoWayArray, start=None) -> np.ndarray:
        X, y = self.design(view.cells)
        if y.min() == y.max():
            raise LogitSeparation("only one response class present")
        beta, _, _ = fit_logit(X, y, start if self.warm_start else None,
                               self.tolerance, self.max_iterations)
        return beta

    def _select(self, params):
        return params if self.subvector is None else params[list(self.subvector)]

    def fit(self, view, start=None):
        return self._select(self.fit_full(view, start))

    def leave_out_estimates(self, array, pairs=False):
        full = self.fit_full(array)
        N, M = array.N, array.M
        X, y = self.design(array.cells)
        idx = np.arange(N * M).reshape(N, M)

        def refit(spec):
            keep = np.ones((N, M), bool)
            if spec.row is not None:
                keep[spec.row] = False
            if spec.col is not None:
                keep[:, spec.col] = False
            k = idx[keep]
            yk = y[k]
            try:
                if yk.min() == yk.max():
                    raise LogitSeparation("only one response class present")
                b, _, _ = fit_logit(X[k], yk, full if self.warm_start else None,
                                    self.tolerance, self.max_iterations)
            except EstimatorError as exc:
                exc.leave_out = spec.axes()[:2]
                raise
            return self._select(b)

        rows = np.array([refit(LeaveOut(row=i)) for i in range(N)])
        cols = np.array([refit(LeaveOut(col=j)) for j in range(M)])
        pr = None
        if pairs:
            pr = np.array([[refit(LeaveOut(row=i, col=j)) for j in range(M)]
                           for i in range(N)])
        return LeaveOutValues(self._select(full), rows, cols, pr)


@dataclass(frozen=True)
class Family:
    """Natural parameter map ``u`` and cumulant ``a`` of a one-parameter GLM."""

    name: str
    u: Callable
    du: Callable
    d2u: Callable
    da: Callable
    d2a: Callable


def _zero(x):
    return np.zeros_like(x)


def _one(x):
    return np.ones_like(x)


def _identity(x):
    return x


FAMILIES = {
    "identity-gaussian": Family("identity-gaussian", _identity, _one, _zero, _identity, _one),
    "logit-bernoulli": Family("logit-bernoulli", _identity, _one, _zero, expit,
                              lambda x: expit(x) * (1.0 - expit(x))),
    "log-poisson": Family("log-poisson", _identity, _one, _zero, np.exp, np.exp),
}


@dataclass
class GEEMoment(Estimator):
    """Independence-working-correlation GEE moment
    ``X_ij(theta) = u'(Z'theta) Z {Y - a'(u(Z'theta))}``.

    ``dispersion`` scales neither the root nor the moment average; it is kept
    so configs can carry it.
    """

    family: str | Family = "identity-gaussian"
    y_index: int = 0
    z_indices: tuple | None = None
    dispersion: float = 1.0
    tolerance: float = 1e-12
    max_iterations: int = 100

    kind = "gee"
    moment_based = True

    def __post_init__(self):
        if isinstance(self.family, str):
            try:
                self.family = FAMILIES[self.family]
            except KeyError:
                raise ValueError(f"unknown GEE family {self.family!r}") from None

    def _yz(self, cells):
        d = cells.shape[-1]
        z_idx = [k for k in range(d) if k != self.y_index] if self.z_indices is None \
            else list(self.z_indices)
        return cells[..., self.y_index], cells[..., z_idx]

    def cell_moments(self, cells: np.ndarray, theta) -> np.ndarray:
        """Per-cell moment ``X_ij(theta)``, same leading shape as ``cells``."""
        y, z = self._yz(cells)
        th = np.asarray(theta, dtype=float)
        eta = z @ th
        f = self.family
        return (f.du(eta) * (y - f.da(f.u(eta))))[..., None] * z

    def _jacobian(self, cells, theta):
        y, z = self._yz(cells)
        z = z.reshape(-1, z.shape[-1])
        y = y.reshape(-1)
        eta = z @ theta
        f = self.family
        u = f.u(eta)
        c = f.d2u(eta) * (y - f.da(u)) - f.du(eta) ** 2 * f.d2a(u)
        return (z * c[:, None]).T @ z / len(y)

    def fit(self, view, start=None):
        cells = view.cells
        _, z = self._yz(cells)
        th = np.zeros(z.shape[-1]) if start is None else np.array(start, float)
        for _ in range(self.max_iterations):
            g = self.cell_moments(cells, th).reshape(-1, len(th)).mean(axis=0)
            if np.linalg.norm(g) <= self.tolerance:
                return th
            J = self._jacobian(cells, th)
            try:
                step = np.linalg.solve(J, -g)
            except np.linalg.LinAlgError:
                raise GEEConvergenceError("singular GEE Jacobian") from None
            # damp on the moment norm
            t, gn = 1.0, np.linalg.norm(g)
            while t > 1e-8:
                cand = th + t * step
                gc = self.cell_moments(cells, cand).reshape(-1, len(th)).mean(axis=0)
                if np.all(np.isfinite(gc)) and np.linalg.norm(gc) < gn:
                    break
                t *= 0.5
            th = cand
        g = self.cell_moments(cells, th).reshape(-1, len(th)).mean(axis=0)
        if np.linalg.norm(g) <= max(self.tolerance, 1e-10):
            return th
        raise GEEConvergenceError(f"GEE root not found (moment norm {np.linalg.norm(g):.3g})")

    def dim(self, array):
        return self._yz(array.cells)[1].shape[-1]

    def leave_out_estimates(self, array, pairs=False):
        raise TypeError("moment-based estimators expose s_values, not leave-out estimates")

    def s_values(self, array, theta, pairs=False, estimates=None):
        return _mean_values(TwoWayArray(self.cell_moments(array.cells, theta)), pairs)


def gee_moment(settings: GEEMoment, view: TwoWayArray, theta) -> np.ndarray:
    """Average GEE moment over ``view`` at ``theta``."""
    x = settings.cell_moments(view.cells, theta)
    return x.reshape(-1, x.shape[-1]).mean(axis=0)


def estimate(spec: Estimator, view: TwoWayArray) -> np.ndarray:
    return np.atleast_1d(spec.fit(view))


_KINDS = {
    "mean": Mean,
    "horvitz_thompson": HorvitzThompson,
    "ht": HorvitzThompson,
    "composite_logit": CompositeLogit,
    "logit": CompositeLogit,
    "gee": GEEMoment,
}


def make_estimator(kind: str, **settings) -> Estimator:
    """Build an estimator from a config-style kind name and keyword settings."""
    try:
        cls = _KINDS[kind.lower().replace("-", "_")]
    except KeyError:
        raise ValueError(f"unknown estimator kind {kind!r}") from None
    for key in ("z_indices", "subvector"):
        if key in settings and settings[key] is not None:
            settings[key] = tuple(settings[key])
    return cls(**settings)
