"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion k: PASS|FAIL ...`` line to the terminal
before asserting, so ``pytest -v`` output doubles as an acceptance report.
All Monte Carlo work uses the fixed master seed 20211013.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from multiway_el.data import TwoWayArray
from multiway_el.el_core import el_statistic
from multiway_el.estimators import CompositeLogit, Mean
from multiway_el.mel import MultiwayEL
from multiway_el.simulation import (BipartiteSBMDGP, RandomEffectDGP, ThreeWayRandomEffectDGP,
                                    edgeworth_terms, replicate_statistics, reports_to_csv,
                                    run_cell, run_experiment)
from multiway_el.variance import eww_variance
from oracles import naive_eww, primal_el_statistic

SEED = 20211013
R = 2000

TABLE1 = {  # (M, sigma2): (mMEL, EWW)
    (5, 1.0): (0.950, 0.857),
    (5, 0.0): (0.941, 0.818),
    (50, 1.0): (0.957, 0.946),
    (50, 0.0): (0.949, 0.935),
}
TABLE2 = {  # (M, theta): (mMEL, EWW)
    (5, 0.5): (0.938, 0.826),
    (50, 0.5): (0.957, 0.943),
}


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def table1_cells():
    return {(M, s): run_cell(RandomEffectDGP(50, M, s), R, SEED)
            for M in (5, 50) for s in (1.0, 0.1, 0.0)}


@pytest.fixture(scope="module")
def table2_cells():
    return {(M, t): run_cell(BipartiteSBMDGP(50, M, t), R, SEED)
            for M in (5, 50) for t in (0.5, 0.1, 0.05)}


def _compare(cells, targets, tol):
    out, ok = [], True
    for key, (mmel, eww) in targets.items():
        rep = cells[key]
        got = (rep.coverage("mMEL"), rep.coverage("EWW"))
        good = abs(got[0] - mmel) <= tol and abs(got[1] - eww) <= tol
        ok &= good
        out.append(f"{key}: {got[0]:.3f}/{got[1]:.3f} vs {mmel:.3f}/{eww:.3f}")
    return ok, "; ".join(out)


@pytest.mark.slow
def test_criterion_1_table1(report, table1_cells):
    ok, detail = _compare(table1_cells, TABLE1, 0.02)
    assert report(1, ok, detail)


@pytest.mark.slow
def test_criterion_2_table2(report, table2_cells):
    ok, detail = _compare(table2_cells, TABLE2, 0.025)
    assert report(2, ok, detail)


@pytest.mark.slow
def test_criterion_3_orderings(report, table1_cells, table2_cells):
    bad = []
    for (M, s), rep in table1_cells.items():
        if s == 0.0 and rep.coverage("MEL") < 0.975:
            bad.append(f"MEL re M={M} s2=0 {rep.coverage('MEL'):.3f}")
        if M == 5 and rep.coverage("EWW") > 0.88:
            bad.append(f"EWW re M=5 s2={s} {rep.coverage('EWW'):.3f}")
        if s == 1.0 and rep.coverage("IID") > 0.40:
            bad.append(f"IID re M={M} {rep.coverage('IID'):.3f}")
    for (M, t), rep in table2_cells.items():
        if rep.coverage("MEL") < 0.975:
            bad.append(f"MEL sbm M={M} theta={t} {rep.coverage('MEL'):.3f}")
        if M == 5 and rep.coverage("EWW") > 0.88:
            bad.append(f"EWW sbm M=5 theta={t} {rep.coverage('EWW'):.3f}")
    n = len(table1_cells) + len(table2_cells)
    assert report(3, not bad, "; ".join(bad) or f"all orderings hold in {n} cells")


def _instance(rng):
    n = int(rng.integers(2, 9))
    kind = rng.integers(3)
    x = (rng.standard_normal(n), rng.exponential(size=n), rng.uniform(-1, 1, n))[kind]
    x = x * 10 ** rng.uniform(-2, 2)
    # place the origin strictly inside the hull, at most 80% of the way to an endpoint
    f = rng.uniform(-0.8, 0.8)
    m = x.mean()
    c = m + f * ((x.max() - m) if f > 0 else (m - x.min()))
    return x - c


def test_criterion_4_dual_primal(report):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(500):
        v = _instance(rng)
        worst = max(worst, abs(el_statistic(v) - primal_el_statistic(v)))
    assert report(4, worst <= 1e-6, f"max |dual - primal| = {worst:.2e} over 500 instances")


def test_criterion_5_identities(report, fixtures_dir):
    from multiway_el.data import read_csv
    errs = {}
    a = read_csv(fixtures_dir / "random_effect_50x50.csv")
    mel = MultiwayEL(Mean(), a)
    pv = mel.pseudo_values([0.9])
    errs["pseudo-value mean"] = float(np.max(np.abs(pv.V.mean(axis=0) - pv.S)))

    x = np.random.default_rng(SEED).standard_normal(40)
    n = len(x)
    lhs = np.mean((x - x.mean()) ** 2)
    rhs = sum((x[i] - x[j]) ** 2 for i in range(n) for j in range(i + 1, n)) / n ** 2
    errs["U-statistic variance"] = abs(lhs - rhs)

    worst = 0.0
    for dgp in (RandomEffectDGP(50, 20, 1.0), BipartiteSBMDGP(50, 20, 0.5)):
        arr, oracle = dgp.generate(SEED, 0)
        worst = max(worst, float(np.max(np.abs(oracle.reconstruct() - arr.cells[..., 0]))))
    errs["reconstruction"] = worst

    small = a.cells[:12, :9]
    errs["EWW naive"] = float(np.max(np.abs(eww_variance(TwoWayArray(small)).matrix
                                            - naive_eww(small, small.mean()))))
    ok = all(e <= 1e-12 for e in errs.values())
    assert report(5, ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


@pytest.mark.slow
def test_criterion_6_calibration(report):
    chi2 = stats.chi2(1).cdf
    out, ok = [], True
    cases = [(f"2-way s2={s}", RandomEffectDGP(80, 80, s), R) for s in (1.0, 0.1, 0.0)]
    cases.append(("3-way s2=1", ThreeWayRandomEffectDGP(40, 40, 40, 1.0), 1000))
    for label, dgp, reps in cases:
        _, mmel = replicate_statistics(dgp, reps, SEED)
        finite = mmel[np.isfinite(mmel)]
        failed = reps - len(finite)
        ks = stats.kstest(finite, chi2).statistic
        good = ks <= 0.05 and failed <= 0.01 * reps
        ok &= good
        out.append(f"{label} KS {ks:.4f}" + (f" ({failed} failed)" if failed else ""))
    assert report(6, ok, "; ".join(out))


def test_criterion_7_edgeworth(report):
    grid = (5, 10, 20, 50, 100, 200)
    bad = [(N, M, t) for N in grid for M in grid for t in (1.64, 1.96, 2.58)
           if not edgeworth_terms(N, M, t).mmel_closer]
    assert report(7, not bad, f"{len(bad)} of {len(grid) ** 2 * 3} grid points violate dominance")


def _logit_fixture():
    rng = np.random.default_rng(SEED)
    z = rng.standard_normal((30, 30)) + rng.standard_normal((30, 1)) * 0.5
    y = (rng.random((30, 30)) < expit(-0.5 + z)).astype(float)
    return TwoWayArray(np.stack([y, z], axis=-1))


def test_criterion_8_logit(report):
    a = _logit_fixture()
    warm = CompositeLogit(warm_start=True)
    cold = CompositeLogit(warm_start=False)
    lw = warm.leave_out_estimates(a, pairs=True)
    lc = cold.leave_out_estimates(a, pairs=True)
    X, y = warm.design(a.cells)
    keep = np.ones((30, 30), bool)
    grads = [np.linalg.norm(X.T @ (y - expit(X @ lw.full)))]
    for kind, fits in (("row", lw.rows), ("col", lw.cols)):
        for k, b in enumerate(fits):
            m = keep.copy()
            if kind == "row":
                m[k] = False
            else:
                m[:, k] = False
            Xk, yk = X[m.ravel()], y[m.ravel()]
            grads.append(np.linalg.norm(Xk.T @ (yk - expit(Xk @ b))))
    for i in range(30):
        for j in range(30):
            m = keep.copy()
            m[i] = False
            m[:, j] = False
            Xk, yk = X[m.ravel()], y[m.ravel()]
            grads.append(np.linalg.norm(Xk.T @ (yk - expit(Xk @ lw.pairs[i, j]))))
    gap = max(np.max(np.abs(lw.rows - lc.rows)), np.max(np.abs(lw.cols - lc.cols)),
              np.max(np.abs(lw.pairs - lc.pairs)))
    ok = max(grads) <= 1e-8 and gap <= 1e-6
    assert report(8, ok, f"max gradient {max(grads):.1e} over {len(grads)} fits, "
                          f"warm/cold gap {gap:.1e}")


def test_criterion_9_determinism(report):
    cfg = {"dgp": "sbm", "N": 20, "M": [5, 10], "theta": [0.5, 0.05],
           "replications": 40, "seed": SEED}
    one = reports_to_csv(run_experiment(cfg, workers=1))
    eight = reports_to_csv(run_experiment(cfg, workers=8))
    again = reports_to_csv(run_experiment(cfg, workers=1))
    ok = one.encode() == eight.encode() == again.encode()
    assert report(9, ok, f"{len(one.encode())} CSV bytes identical at 1 and 8 workers")
