from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from multiway_el.data import TwoWayArray
from multiway_el.errors import CorrectionNotPD
from multiway_el.estimators import CompositeLogit, GEEMoment, HorvitzThompson, Mean
from multiway_el.mel import (CorrectionTerms, MultiwayEL, c_factor, chi2_threshold, grid_trace,
                             invert_confidence_interval, lower_factor, mel_statistic,
                             mmel_statistic, pseudo_values, q_terms)
from oracles import naive_pseudo_values, naive_q_grid


def test_pseudo_values_small(small):
    pv = pseudo_values(Mean(), TwoWayArray(small), 2.5)
    assert_allclose(pv.V[:, 0], [-3.0, 3.0, -1.5, 1.5])
    assert_allclose(pv.S_l[:, 0], [1.0, -1.0, 0.5, -0.5])
    assert_allclose(pv.S, [0.0])


def test_pseudo_values_constant():
    pv = pseudo_values(Mean(), TwoWayArray(np.full((3, 4), 2.0)), 2.0)
    assert_allclose(pv.V, 0.0, atol=1e-14)


def test_pseudo_values_match_naive(rng):
    x = rng.standard_normal((4, 3, 2))
    assert_allclose(pseudo_values(Mean(), TwoWayArray(x), [0.1, -0.2]).V,
                    naive_pseudo_values(x, np.array([0.1, -0.2])), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.floats(-5, 5), st.integers(0, 2 ** 32 - 1))
def test_pseudo_value_mean_identity(N, M, theta, seed):
    x = np.random.default_rng(seed).standard_normal((N, M))
    pv = pseudo_values(Mean(), TwoWayArray(x), theta)
    assert_allclose(pv.V.mean(axis=0), pv.S, atol=1e-12)


def test_q_terms_small(small):
    Q = q_terms(Mean(), TwoWayArray(small), 2.5)
    assert c_factor(2, 2) == 0.5
    assert_allclose(Q[:, :, 0], [[-0.75, -0.25], [0.25, 0.75]], atol=1e-15)


def test_q_terms_constant():
    assert_allclose(q_terms(Mean(), TwoWayArray(np.full((3, 3), 4.0))), 0.0, atol=1e-13)


def test_q_terms_match_naive(rng):
    x = rng.standard_normal((4, 3))
    for theta in (0.0, 0.7):
        expected = naive_q_grid(x[..., None], np.array([theta]))
        assert np.max(np.abs(q_terms(Mean(), TwoWayArray(x), theta) - expected)) <= 1e-12


def test_c_factor_closed_form():
    for N, M in [(2, 2), (5, 50), (50, 5), (17, 31)]:
        n = N + M
        assert abs(c_factor(N, M) - (N - 1) * (M - 1) * n / (N * M * (n - 2))) <= 1e-14


def test_c_factor_bound_sweep():
    for N in range(2, 201):
        for M in range(2, 201, 7):
            n = N + M
            assert abs(c_factor(N, M) - 1) <= 1 / N + 1 / M + 4 / n


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_u_statistic_variance_identity(xs):
    x = np.array(xs)
    n = len(x)
    lhs = np.mean((x - x.mean()) ** 2)
    rhs = sum((x[a] - x[b]) ** 2 for a in range(n) for b in range(a + 1, n)) / n ** 2
    assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * max(1.0, np.max(x ** 2)))


def test_statistics_vanish_at_estimate(rng):
    a = TwoWayArray(rng.standard_normal((8, 6)))
    mel = MultiwayEL(Mean(), a)
    th = mel.theta_hat
    assert mel.mel_statistic(th) == pytest.approx(0.0, abs=1e-20)
    assert mel.mmel_statistic(th) == pytest.approx(0.0, abs=1e-20)
    assert_allclose(mel.modified_pseudo_values(th), mel.pseudo_values(th).V)


def test_far_theta_is_infeasible(small):
    assert mel_statistic(Mean(), TwoWayArray(small), 100.0) == math.inf


class _EqualFactors(MultiwayEL):
    def correction(self, theta, use_c_factor=True, clip=False):
        c = super().correction(theta, use_c_factor, clip)
        return CorrectionTerms(c.Q, c.C_factor, c.gamma_hat, c.gamma_hat, c.clipped)


def test_equal_factors_reduce_to_plain_mel(rng):
    a = TwoWayArray(rng.standard_normal((7, 5)))
    mel = _EqualFactors(Mean(), a)
    for theta in (-0.3, 0.1, 0.4):
        assert_allclose(mel.modified_pseudo_values([theta]), mel.pseudo_values([theta]).V,
                        atol=1e-12)
        assert_allclose(mel.mmel_statistic([theta]), mel.mel_statistic([theta]), atol=1e-10)


def test_correction_factors(rng):
    a = TwoWayArray(rng.standard_normal((9, 6, 2)))
    mel = MultiwayEL(Mean(), a)
    theta = mel.theta_hat + [0.05, -0.02]
    corr = mel.correction(theta)
    n = mel.n
    v_hat = mel.pseudo_values(mel.theta_hat).V
    v_th = mel.pseudo_values(theta).V
    Q = corr.Q.reshape(-1, 2)
    assert_allclose(corr.gamma_hat @ corr.gamma_hat.T, v_hat.T @ v_hat / n, atol=1e-10)
    assert_allclose(corr.gamma_tilde @ corr.gamma_tilde.T, v_th.T @ v_th / n - Q.T @ Q / n,
                    atol=1e-10)
    assert np.allclose(np.triu(corr.gamma_tilde, 1), 0)


def test_mean_correction_scalar_closed_form(rng):
    # for the mean, V(theta_hat) - V(theta) = theta - theta_hat and Q does not move with theta
    a = TwoWayArray(rng.standard_normal((10, 4)))
    mel = MultiwayEL(Mean(), a)
    th_hat = mel.theta_hat[0]
    n = mel.n
    v = mel.pseudo_values(mel.theta_hat).V[:, 0]
    qsum = np.sum(mel.q_terms()[..., 0] ** 2)
    for theta in (th_hat - 0.3, th_hat + 0.2):
        g2 = v @ v / n + (th_hat - theta) ** 2 - qsum / n
        assert_allclose(mel.correction([theta]).gamma_tilde[0, 0] ** 2, g2, rtol=1e-10)


def test_correction_not_pd_and_clip():
    mat = np.array([[1.0, 0.0], [0.0, -0.5]])
    with pytest.raises(CorrectionNotPD):
        lower_factor(mat)
    L, clipped = lower_factor(mat, clip=True)
    assert clipped
    assert np.all(np.linalg.eigvalsh(L @ L.T) > 0)


def test_not_pd_surfaces_from_statistic():
    # pure interaction: every pseudo value is zero but the Q terms are not
    x = np.array([[1.0, -1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 1.0, -1.0]])
    mel = MultiwayEL(Mean(), TwoWayArray(x))
    assert_allclose(mel.pseudo_values(mel.theta_hat).V, 0.0, atol=1e-14)
    with pytest.raises(CorrectionNotPD):
        mel.mmw_matrix()
    with pytest.raises(CorrectionNotPD):
        mel.mmel_statistic(mel.theta_hat + 0.01)
    assert mel.correction(mel.theta_hat + 0.01, clip=True).clipped


def test_no_c_variant_differs(rng):
    a = TwoWayArray(rng.standard_normal((6, 4)))
    mel = MultiwayEL(Mean(), a)
    th = mel.theta_hat + 0.2
    assert mel.mmel_statistic(th, use_c_factor=False) != mel.mmel_statistic(th)
    assert mel.statistic("mmel-noc", th) == mel.mmel_statistic(th, use_c_factor=False)
    assert mmel_statistic(Mean(), a, th) == mel.mmel_statistic(th)


def test_threshold():
    assert_allclose(chi2_threshold(0.95, 1), 3.841458820694124)


def test_symmetric_data_gives_symmetric_interval():
    x = np.array([[-2.0, -1.0, 0.5], [1.0, 2.0, -0.5], [0.3, -0.3, 0.0]])
    x = np.concatenate([x, -x], axis=0)
    for kind in ("mel", "mmel"):
        cs = invert_confidence_interval(Mean(), TwoWayArray(x), 0.95, kind)
        assert abs(cs.lo + cs.hi) <= 1e-6
        assert cs.lo < 0 < cs.hi


def test_interval_contains_estimate_and_endpoints_hit_threshold(rng):
    a = TwoWayArray(1.0 + rng.standard_normal((30, 10)))
    mel = MultiwayEL(Mean(), a)
    for kind in ("mel", "mmel", "mmel-noc"):
        cs = mel.confidence_set(0.95, kind)
        assert cs.lo <= mel.theta_hat[0] <= cs.hi
        assert not cs.possibly_non_interval
        for end in (cs.lo, cs.hi):
            assert_allclose(mel.statistic(kind, [end]), cs.threshold, rtol=1e-5)
        assert cs.contains([mel.theta_hat[0]])
        assert not cs.contains([cs.hi + 1e-3])


def test_monotone_on_each_side(rng):
    a = TwoWayArray(rng.standard_normal((40, 20)))
    mel = MultiwayEL(Mean(), a)
    cs = mel.confidence_set(0.95, "mmel")
    th = mel.theta_hat[0]
    right = [mel.mmel_statistic([t]) for t in np.linspace(th, cs.hi, 15)]
    left = [mel.mmel_statistic([t]) for t in np.linspace(th, cs.lo, 15)]
    assert np.all(np.diff(right) >= 0)
    assert np.all(np.diff(left) >= 0)


def test_location_equivariance(rng):
    x = rng.standard_normal((12, 7))
    c = 3.0
    for kind in ("mel", "mmel"):
        a = invert_confidence_interval(Mean(), TwoWayArray(x), 0.95, kind)
        b = invert_confidence_interval(Mean(), TwoWayArray(x + c), 0.95, kind)
        assert_allclose([b.lo, b.hi], [a.lo + c, a.hi + c], atol=1e-7)


def test_max_pseudo_value_shrinks_relative_to_root_n():
    ratios = []
    for K in (20, 40, 80, 160):
        x = np.random.default_rng(99).standard_normal((K, K))
        v = pseudo_values(Mean(), TwoWayArray(x), x.mean()).V
        ratios.append(np.max(np.abs(v)) / np.sqrt(2 * K))
    assert np.all(np.diff(ratios) < 0)


def test_multivariate_set_predicate_and_grid(rng):
    a = TwoWayArray(rng.standard_normal((15, 10, 2)))
    mel = MultiwayEL(Mean(), a)
    cs = mel.confidence_set(0.95, "mmel")
    assert cs.lo is None
    assert cs.contains(mel.theta_hat)
    assert not cs.contains(mel.theta_hat + 5.0)
    inside = grid_trace(cs, [np.linspace(-1, 1, 5), np.linspace(-1, 1, 4)])
    assert inside.shape == (5, 4)
    assert cs.grid is not None


def test_other_estimators_run(rng):
    y = rng.standard_normal((8, 6))
    w = rng.uniform(1, 3, (8, 6))
    ht = MultiwayEL(HorvitzThompson(), TwoWayArray(np.stack([y, w], axis=-1)))
    # the pseudo value mean identity is only approximate beyond the plain mean
    assert ht.mmel_statistic(ht.theta_hat) == ht.mel_statistic(ht.theta_hat) < 1e-3
    cs = ht.confidence_set(0.95, "mmel")
    assert cs.lo < ht.theta_hat[0] < cs.hi

    z = rng.random((15, 15))
    yy = (rng.random((15, 15)) < 0.4 + 0.2 * z).astype(float)
    lg = MultiwayEL(CompositeLogit(subvector=(1,)), TwoWayArray(np.stack([yy, z], axis=-1)))
    assert lg.mmel_statistic(lg.theta_hat) == lg.mel_statistic(lg.theta_hat) < 0.05
    assert lg.mmel_statistic(lg.theta_hat + 0.1) > 0

    cells = np.stack([y, np.ones_like(y)], axis=-1)
    gee = MultiwayEL(GEEMoment(), TwoWayArray(cells))
    assert_allclose(gee.theta_hat, [y.mean()], atol=1e-12)
    assert gee.mmel_statistic(gee.theta_hat) < 1e-12
