import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msmwc import bounds
from msmwc.learner import MsMwC
from msmwc.master import ExpertPool, SharedBank, SingleBank


def _pool(etas, d=3, T=50, **kw):
    return ExpertPool(etas, [SingleBank(MsMwC.fixed(d, T, 2 * e)) for e in etas], T=T, **kw)


def test_prior_examples():
    assert np.allclose(_pool([1 / 64, 1 / 128]).p_prime, [0.8, 0.2])
    assert np.allclose(_pool([1 / 64, 1 / 128, 1 / 256]).p_prime, [16 / 21, 4 / 21, 1 / 21])


def test_identical_bases_give_common_decision():
    pool = _pool([1 / 64, 1 / 128])
    # bases with different rates still share their first play under a zero hint
    w = pool.begin_round(np.zeros(3))
    assert np.allclose(w, pool.decisions[0]) and np.allclose(pool.decisions[0], pool.decisions[1])


def test_zero_error_means_zero_correction():
    pool = _pool([1 / 64, 1 / 128], record=True)
    m = np.array([0.3, -0.1, 0.2])
    pool.begin_round(m)
    g = pool.decisions @ m
    pool.end_round(m)
    from msmwc import entropy_omd

    p0 = np.array([0.8, 0.2])
    assert np.allclose(pool.p_prime, entropy_omd.solve(p0, g, pool.etas), atol=1e-15)


def test_active_set_rules():
    pool = _pool([1 / 64, 1 / 128, 1 / 256])
    pool.set_active([False, True, True])
    assert pool.p_prime[0] == 0 and pool.p_prime.sum() == pytest.approx(1)
    with pytest.raises(ValueError):
        pool.set_active([True, True, True])
    w = pool.begin_round(np.zeros(3))
    assert pool.p[0] == 0 and np.isclose(w.sum(), 1)


def test_unknown_range_active_example():
    from msmwc.expert_suites import unknown_range_active, unknown_range_rates

    rule = unknown_range_active(1.0, 10)
    ks = np.arange(1, unknown_range_rates(1.0, 10).size + 1)
    assert ks[rule(4.0)].tolist() == [k for k in ks if k >= 3]
    assert rule(1.0).all()


@given(st.integers(0, 10_000))
def test_aggregation_linearity(seed):
    rng = np.random.default_rng(seed)
    pool = _pool([1 / 64, 1 / 128, 1 / 512], d=4)
    for _ in range(20):
        w = pool.begin_round(rng.uniform(-1, 1, 4))
        loss = rng.uniform(-1, 1, 4)
        assert w @ loss == pytest.approx(pool.p @ (pool.decisions @ loss), abs=1e-12)
        pool.end_round(loss)


@given(st.integers(0, 10_000))
def test_coordinate_constant_hint_shift_leaves_p(seed):
    rng = np.random.default_rng(seed)
    a, b = _pool([1 / 64, 1 / 256], d=3), _pool([1 / 64, 1 / 256], d=3)
    for _ in range(15):
        m = rng.uniform(-1, 1, 3)
        c = rng.uniform(-1, 1)
        a.begin_round(m)
        b.begin_round(m + c)
        assert np.allclose(a.p, b.p, atol=1e-12)
        loss = rng.uniform(-1, 1, 3)
        a.end_round(loss, m)
        b.end_round(loss + c, m + c)


def test_recentered_self_difference_is_zero():
    pool = _pool([1 / 64], recentered=True)
    pool.begin_round(np.zeros(3))
    # a single expert plays the master's point, so its recentered error is zero
    assert np.allclose(pool.decisions[0], pool.w)


@given(st.integers(0, 10_000))
def test_master_inequality(seed):
    rng = np.random.default_rng(seed)
    d, T, K = 3, 60, 3
    etas = rng.uniform(1e-3, 1 / 64, K)
    bases = [MsMwC.fixed(d, T, rng.uniform(1e-3, 1 / 64), record=True) for _ in range(K)]
    pool = ExpertPool(etas, [SingleBank(b) for b in bases], record=True, T=T)
    for _ in range(T):
        pool.begin_round(rng.uniform(-1, 1, d))
        pool.end_round(rng.uniform(-1, 1, d))
    for k in range(K):
        for u in np.eye(d):
            base = bounds.lemma1_rhs(bases[k].history, u).realized
            assert bounds.master_bound_rhs(pool.history, etas, k, u, base).slack() >= -1e-6


def test_single_expert_master_terms():
    d, T = 2, 30
    base = MsMwC.fixed(d, T, 0.01, record=True)
    pool = ExpertPool([0.01], [SingleBank(base)], record=True, T=T)
    rng = np.random.default_rng(0)
    for _ in range(T):
        pool.begin_round(np.zeros(d))
        pool.end_round(rng.uniform(-1, 1, d))
    rep = bounds.master_bound_rhs(pool.history, [0.01], 0, np.eye(d)[0], 0.0)
    assert rep.terms["log_prior"] == 0.0 and rep.terms["rate_ratio"] == pytest.approx(100.0)


def test_shared_bank_views_feed_once():
    from msmwc.olo_base import OptimisticGD

    bank = SharedBank(OptimisticGD(2, [0.1, 0.05], 1.0))
    p1 = ExpertPool([1 / 64, 1 / 128], [bank.view()])
    p2 = ExpertPool([1 / 64, 1 / 128], [bank.view()])
    for _ in range(3):
        w1, w2 = p1.begin_round(np.zeros(2)), p2.begin_round(np.zeros(2))
        assert np.allclose(w1, w2)
        p1.end_round(np.array([0.5, -0.2]))
        p2.end_round(np.array([0.5, -0.2]))
    assert bank.bank.t == 4
