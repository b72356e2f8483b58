"""Empirical likelihood for a zero mean, computed through the dual problem.

Given pseudo values ``v_1, ..., v_n`` in R^d the log empirical likelihood
ratio for the hypothesis ``E[v] = 0`` is

    stat = 2 * sup_lambda sum_l log(1 + lambda' v_l),

a concave maximisation in ``lambda`` that is finite exactly when the origin
lies in the relative interior of the convex hull of the ``v_l``.  The
maximiser gives the primal weights ``w_l = 1 / (n (1 + lambda' v_l))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import ELConvergenceError

__all__ = [
    "DEFAULT_MAX_ITERATIONS",
    "DEFAULT_TOLERANCE",
    "INFEASIBLE",
    "ELProblem",
    "ELSolution",
    "Status",
    "el_statistic",
    "origin_in_hull",
    "solve_dual",
]

DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_ITERATIONS = 100

#: Returned by :func:`el_statistic` when the origin is outside the hull, so a
#: confidence set inversion treats such a point as rejected at any level.
INFEASIBLE = math.inf

_FEAS_MARGIN = 1e-10
_MAX_HALVINGS = 20
_RIDGE = 1e-10


class Status(enum.Enum):
    CONVERGED = "Converged"
    INFEASIBLE_HULL = "InfeasibleHull"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True)
class ELProblem:
    values: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError("values must be a non-empty (n, d) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ValueError("tolerance and max_iterations must be positive")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ELSolution:
    lam: np.ndarray
    weights: np.ndarray
    statistic: float
    status: Status
    iterations: int = 0
    # objective value after each accepted Newton step, starting at lambda=0
    history: tuple = field(default=(), repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def origin_in_hull(values: np.ndarray) -> bool:
    """True when 0 lies in the relative interior of the convex hull of the rows.

    Scalar problems are decided by sign; otherwise a small LP maximises the
    smallest weight of a zero-mean convex combination.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    scale = np.max(np.abs(v))
    if scale == 0.0:
        return True
    v = v / scale
    n, d = v.shape
    if d == 1:
        x = v[:, 0]
        return bool(x.min() < 0.0 < x.max())
    # variables (w_1..w_n, t); maximise t s.t. w_l >= t, sum w = 1, v'w = 0
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    b_ub = np.zeros(n)
    a_eq = np.vstack([np.append(np.ones(n), 0.0), np.hstack([v.T, np.zeros((d, 1))])])
    b_eq = np.concatenate([[1.0], np.zeros(d)])
    bounds = [(0.0, None)] * n + [(None, 1.0)]
    res = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                           bounds=bounds, method="highs")
    return bool(res.status == 0 and -res.fun > 1e-12 / n)


def _objective(lam: np.ndarray, v: np.ndarray) -> float:
    return float(np.sum(np.log1p(v @ lam)))


def _newton_direction(grad: np.ndarray, vr: np.ndarray) -> np.ndarray:
    # vr holds v_l / (1 + lambda' v_l); the negative Hessian is vr' vr
    hess = vr.T @ vr
    try:
        c, low = linalg.cho_factor(hess, lower=True)
    except linalg.LinAlgError:
        d = hess.shape[0]
        ridge = _RIDGE * max(np.trace(hess) / d, np.finfo(float).tiny)
        c, low = linalg.cho_factor(hess + ridge * np.eye(d), lower=True)
    return linalg.cho_solve((c, low), grad)


def solve_dual(problem: ELProblem) -> ELSolution:
    """Damped Newton ascent on ``sum log(1 + lambda' v_l)`` from ``lambda = 0``.

    Steps are halved until every ``1 + lambda' v_l`` stays above a small margin
    and the objective does not decrease.  Values are rescaled by their largest
    norm internally; the returned multiplier is on the original scale.
    """
    v_raw = problem.values
    n, d = v_raw.shape
    scale = float(np.max(np.linalg.norm(v_raw, axis=1)))
    zeros = np.zeros(d)
    if scale == 0.0:
        return ELSolution(zeros, np.full(n, 1.0 / n), 0.0, Status.CONVERGED, 0, (0.0,))
    if not origin_in_hull(v_raw):
        return ELSolution(zeros, np.full(n, np.nan), INFEASIBLE, Status.INFEASIBLE_HULL)

    v = v_raw / scale
    # stop on max(absolute, scale-relative) gradient so tiny data stays precise
    tol = problem.tolerance * min(1.0, 1.0 / scale)
    cap = 0.5 * 1e3 * n
    lam = np.zeros(d)
    obj = 0.0
    history = [obj]
    status = Status.MAX_ITERATIONS
    for _ in range(problem.max_iterations):
        r = 1.0 + v @ lam
        vr = v / r[:, None]
        grad = vr.sum(axis=0) / n
        if np.linalg.norm(grad) <= tol:
            status = Status.CONVERGED
            break
        step = _newton_direction(grad * n, vr)
        t = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            cand = lam + t * step
            if np.all(1.0 + v @ cand > _FEAS_MARGIN):
                cand_obj = _objective(cand, v)
                if cand_obj >= obj:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            # a Newton decrement below round-off means we already sit at the optimum
            if float(step @ grad) * n <= 64 * np.finfo(float).eps * max(1.0, abs(obj)):
                status = Status.CONVERGED
            else:
                status = Status.INFEASIBLE_HULL
            break
        lam, obj = cand, cand_obj
        history.append(obj)
        if obj > cap:
            status = Status.INFEASIBLE_HULL
            break
    else:
        r = 1.0 + v @ lam
        if np.linalg.norm((v / r[:, None]).sum(axis=0) / n) <= tol:
            status = Status.CONVERGED

    it = len(history) - 1
    if status is Status.INFEASIBLE_HULL:
        return ELSolution(lam / scale, np.full(n, np.nan), INFEASIBLE, status, it, tuple(history))
    weights = 1.0 / (n * (1.0 + v @ lam))
    return ELSolution(lam / scale, weights, max(2.0 * obj, 0.0), status, it, tuple(history))


def el_statistic(values, tolerance: float = DEFAULT_TOLERANCE,
                 max_iterations: int = DEFAULT_MAX_ITERATIONS) -> float:
    """Return ``2 sup sum log(1 + lambda' v_l)``, or :data:`INFEASIBLE`.

    Raises
    ------
    ELConvergenceError
        If the Newton iteration exhausts its budget.  This is kept distinct
        from hull infeasibility, which is not an error.
    """
    sol = solve_dual(ELProblem(values, tolerance, max_iterations))
    if sol.status is Status.MAX_ITERATIONS:
        raise ELConvergenceError(
            f"EL dual did not converge in {max_iterations} iterations")
    return sol.statistic
