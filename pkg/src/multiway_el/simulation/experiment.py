"""Monte Carlo coverage experiments.

A replication draws one array from a DGP and checks, for each method,
whether its nominal-level confidence set contains the true mean.  For the
likelihood-type methods this is the test ``stat(theta_true) <= chi2_{1,level}``
and for the Wald-type methods ``|theta_hat - theta_true| <= z * se``, which
is equivalent to building the interval and checking membership.

Replication ``r`` uses random streams keyed by ``(seed, cell, r)`` only, and
results are reassembled by replication index, so the output never depends on
the number of worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy import stats

from ..data import ThreeWayArray
from ..errors import CorrectionNotPD, ELConvergenceError
from ..estimators import Mean
from ..mel import MultiwayEL
from ..threeway import ThreeWayMEL
from ..variance import eww_variance, iid_variance
from .dgp import BipartiteSBMDGP, RandomEffectDGP, ThreeWayRandomEffectDGP

__all__ = [
    "METHODS",
    "ConfigError",
    "CoverageReport",
    "ExperimentConfig",
    "evaluate_replication",
    "replicate_statistics",
    "run_cell",
    "run_experiment",
]

METHODS = ("MEL", "mMEL", "mMW", "EWW", "IID")
EXTRA_METHODS = ("mMEL-noC",)

# outcome codes per method and replication
COVERED, MISSED = 1, 0
FAIL_NONCONVERGENCE, FAIL_NOT_PD, FAIL_NEGATIVE_VARIANCE = -1, -2, -3
FAILURE_NAMES = {
    FAIL_NONCONVERGENCE: "nonconvergence",
    FAIL_NOT_PD: "not_pd",
    FAIL_NEGATIVE_VARIANCE: "negative_variance",
}
FLAG_FAILURE_RATE = 0.01


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class CoverageReport:
    dgp: str
    N: int
    M: int
    param_name: str
    param: float
    level: float
    replications: int
    methods: tuple
    covered: dict
    failures: dict = field(default_factory=dict)
    T: int | None = None

    def coverage(self, method: str) -> float:
        if self.replications == 0:
            return math.nan
        return self.covered[method] / self.replications

    def mc_se(self, method: str) -> float:
        p = self.coverage(method)
        if self.replications == 0:
            return math.nan
        return math.sqrt(p * (1 - p) / self.replications)

    def failure_count(self, method: str) -> int:
        return sum(self.failures.get(method, {}).values())

    def flagged(self, method: str) -> bool:
        return self.replications > 0 and \
            self.failure_count(method) > FLAG_FAILURE_RATE * self.replications

    def rows(self):
        for m in self.methods:
            yield {
                "dgp": self.dgp, "N": self.N, "M": self.M, "T": self.T,
                "param_name": self.param_name, "param": self.param,
                "method": m, "level": self.level,
                "replications": self.replications, "covered": self.covered[m],
                "coverage": self.coverage(m), "mc_se": self.mc_se(m),
                "failures": self.failure_count(m),
                "failure_detail": ";".join(f"{k}={v}" for k, v in
                                           sorted(self.failures.get(m, {}).items())),
                "flagged": self.flagged(m),
            }


def _likelihood_outcome(fn, thr):
    try:
        return (COVERED if fn() <= thr else MISSED), None
    except CorrectionNotPD:
        return FAIL_NOT_PD, None
    except ELConvergenceError:
        return FAIL_NONCONVERGENCE, None


def _wald_outcome(diff: float, var: float, z: float) -> int:
    if not var >= 0:
        return FAIL_NEGATIVE_VARIANCE
    return COVERED if diff * diff <= z * z * var else MISSED


def evaluate_replication(dgp, seed: int, replication: int, level: float = 0.95,
                         methods=METHODS, with_statistics: bool = False):
    """Outcome code per method for one replication.

    With ``with_statistics`` also returns the MEL and modified MEL statistics
    at the true parameter (NaN on failure).
    """
    array, _ = dgp.generate(seed, replication)
    theta = np.array([dgp.theta])
    thr = stats.chi2.ppf(level, 1)
    z = stats.norm.ppf(0.5 + level / 2)
    three = isinstance(array, ThreeWayArray)
    mel = ThreeWayMEL(array) if three else MultiwayEL(Mean(), array)
    th_hat = float(mel.theta_hat[0])
    diff = th_hat - float(theta[0])
    out = {}
    values = {"MEL": math.nan, "mMEL": math.nan}

    def record(name, fn):
        def wrapped():
            v = fn()
            values[name] = v
            return v
        return wrapped

    for m in methods:
        if m == "MEL":
            out[m], _ = _likelihood_outcome(record("MEL", lambda: mel.mel_statistic(theta)), thr)
        elif m == "mMEL":
            out[m], _ = _likelihood_outcome(record("mMEL", lambda: mel.mmel_statistic(theta)), thr)
        elif m == "mMEL-noC":
            if three:
                raise ConfigError("methods", "mMEL-noC is two-way only")
            out[m], _ = _likelihood_outcome(lambda: mel.mmel_statistic(theta, False), thr)
        elif m == "mMW":
            try:
                var = mel.mmw_matrix()[0, 0] / mel.n
                out[m] = _wald_outcome(diff, var, z)
            except CorrectionNotPD:
                out[m] = FAIL_NOT_PD
        elif m in ("EWW", "IID"):
            if three:
                raise ConfigError("methods", f"{m} is two-way only")
            est = eww_variance(array) if m == "EWW" else iid_variance(array)
            out[m] = _wald_outcome(diff, est.matrix[0, 0], z)
        else:
            raise ConfigError("methods", f"unknown method {m!r}")
    codes = tuple(out[m] for m in methods)
    if with_statistics:
        return codes, (values["MEL"], values["mMEL"])
    return codes


def _run_chunk(args):
    dgp, seed, reps, level, methods, with_stats = args
    return [evaluate_replication(dgp, seed, r, level, methods, with_stats) for r in reps]


def _map_replications(dgp, seed, replications, level, methods, workers, with_stats):
    if replications == 0:
        return []
    workers = max(1, int(workers or 1))
    if workers == 1:
        return _run_chunk((dgp, seed, range(replications), level, methods, with_stats))
    n_chunks = min(replications, workers * 4)
    bounds = np.linspace(0, replications, n_chunks + 1).astype(int)
    jobs = [(dgp, seed, range(a, b), level, methods, with_stats)
            for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, jobs))
    return [r for part in parts for r in part]


def run_cell(dgp, replications: int, seed: int, level: float = 0.95,
             methods=METHODS, workers: int = 1) -> CoverageReport:
    methods = tuple(methods)
    results = _map_replications(dgp, seed, replications, level, methods, workers, False)
    covered = {m: 0 for m in methods}
    failures = {m: {} for m in methods}
    for codes in results:
        for m, c in zip(methods, codes):
            if c == COVERED:
                covered[m] += 1
            elif c < 0:
                name = FAILURE_NAMES[c]
                failures[m][name] = failures[m].get(name, 0) + 1
    return CoverageReport(dgp.name, dgp.N, dgp.M, dgp.param_name, float(dgp.param), level,
                          replications, methods, covered,
                          {m: f for m, f in failures.items() if f},
                          getattr(dgp, "T", None))


def replicate_statistics(dgp, replications: int, seed: int, workers: int = 1):
    """Arrays of MEL and modified MEL statistics at the true mean."""
    res = _map_replications(dgp, seed, replications, 0.95, ("MEL", "mMEL"), workers, True)
    vals = np.array([r[1] for r in res], dtype=float).reshape(-1, 2)
    return vals[:, 0], vals[:, 1]


_DGPS = {
    "random_effect": RandomEffectDGP,
    "sbm": BipartiteSBMDGP,
    "threeway_random_effect": ThreeWayRandomEffectDGP,
}
_PARAM_KEYS = {"random_effect": "sigma2", "sbm": "theta", "threeway_random_effect": "sigma2"}


@dataclass
class ExperimentConfig:
    """One experiment: a DGP over a grid of column counts and parameter values.

    Recognised keys: ``dgp``, ``N``, ``M`` (int or list), ``T`` (three-way
    only), ``sigma2`` or ``theta`` (number or list, per DGP), ``methods``,
    ``level``, ``replications``, ``seed``, ``workers``, ``output``, ``title``.
    """

    dgp: str
    N: int
    M: list
    params: list
    T: int | None = None
    methods: tuple = METHODS
    level: float = 0.95
    replications: int = 2000
    seed: int = 20211013
    workers: int | None = None
    output: str = "experiment"
    title: str | None = None

    KEYS = ("dgp", "N", "M", "T", "sigma2", "theta", "methods", "level",
            "replications", "seed", "workers", "output", "title")

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        for key in raw:
            if key not in cls.KEYS:
                raise ConfigError(key, "unknown config key")
        if "dgp" not in raw:
            raise ConfigError("dgp", "missing required key")
        dgp = str(raw["dgp"])
        if dgp not in _DGPS:
            raise ConfigError("dgp", f"unknown DGP {dgp!r}; choose from {sorted(_DGPS)}")
        pkey = _PARAM_KEYS[dgp]
        other = "theta" if pkey == "sigma2" else "sigma2"
        if other in raw:
            raise ConfigError(other, f"not a parameter of dgp {dgp}")
        if pkey not in raw:
            raise ConfigError(pkey, "missing required key")

        def as_list(key, conv):
            v = raw[key]
            try:
                return [conv(x) for x in (v if isinstance(v, (list, tuple)) else [v])]
            except (TypeError, ValueError):
                raise ConfigError(key, f"bad value {v!r}") from None

        def scalar(key, conv, default):
            if key not in raw or raw[key] is None:
                return default
            try:
                return conv(raw[key])
            except (TypeError, ValueError):
                raise ConfigError(key, f"bad value {raw[key]!r}") from None

        for key in ("N", "M"):
            if key not in raw:
                raise ConfigError(key, "missing required key")
        cfg = cls(
            dgp=dgp,
            N=scalar("N", int, None),
            M=as_list("M", int),
            params=as_list(pkey, float),
            T=scalar("T", int, None),
            methods=tuple(as_list("methods", str)) if "methods" in raw else
            (("MEL", "mMEL", "mMW") if dgp == "threeway_random_effect" else METHODS),
            level=scalar("level", float, 0.95),
            replications=scalar("replications", int, 2000),
            seed=scalar("seed", int, 20211013),
            workers=scalar("workers", int, None),
            output=scalar("output", str, "experiment"),
            title=scalar("title", str, None),
        )
        if not 0 < cfg.level < 1:
            raise ConfigError("level", "must lie in (0, 1)")
        if cfg.replications < 0:
            raise ConfigError("replications", "must be non-negative")
        if cfg.workers is not None and cfg.workers < 1:
            raise ConfigError("workers", "must be at least 1")
        if cfg.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        if dgp == "threeway_random_effect" and cfg.T is None:
            raise ConfigError("T", "required for the three-way DGP")
        if dgp != "threeway_random_effect" and cfg.T is not None:
            raise ConfigError("T", "only valid for the three-way DGP")
        known = set(METHODS) | set(EXTRA_METHODS)
        for m in cfg.methods:
            if m not in known:
                raise ConfigError("methods", f"unknown method {m!r}")
        return cfg

    @classmethod
    def from_yaml(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a mapping of keys to values")
        return cls.from_dict(raw)

    def cells(self):
        cls = _DGPS[self.dgp]
        for M in self.M:
            for p in self.params:
                if self.dgp == "threeway_random_effect":
                    yield cls(self.N, M, self.T, sigma2=p)
                elif self.dgp == "sbm":
                    yield cls(self.N, M, theta=p)
                else:
                    yield cls(self.N, M, sigma2=p)


def default_workers() -> int:
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig | dict, workers: int | None = None) -> list:
    """Run every (M, parameter) cell of ``config``; one report per cell."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    w = workers or config.workers or default_workers()
    return [run_cell(dgp, config.replications, config.seed, config.level,
                     config.methods, w) for dgp in config.cells()]
