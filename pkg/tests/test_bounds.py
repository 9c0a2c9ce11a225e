import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msmwc import bounds
from msmwc.learner import MsMwC


def test_f_kl_examples():
    assert bounds.f_kl(0.4, 0.4) == 0.0
    assert bounds.f_kl(0.0, 0.7) == pytest.approx(0.7)
    assert bounds.f_kl(1.0, 0.5) == pytest.approx(math.log(2) - 0.5)
    assert bounds.f_kl(0.3, 0.0) == math.inf
    with pytest.raises(ValueError):
        bounds.f_kl(1.5, 0.5)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1))
def test_f_kl_convex_in_first_argument(a1, a2, b):
    mid = bounds.f_kl(0.5 * (a1 + a2), b)
    assert mid <= 0.5 * (bounds.f_kl(a1, b) + bounds.f_kl(a2, b)) + 1e-12


def test_lemma1_singleton_simplex():
    lr = MsMwC.fixed(1, 10, 0.01, record=True)
    for _ in range(10):
        lr.begin_round(np.zeros(1))
        lr.end_round(np.array([0.5]))
    rep = bounds.lemma1_rhs(lr.history, np.array([1.0]))
    assert rep.realized == 0.0
    assert rep.terms["kl_over_eta"] == 0.0 and rep.terms["rate_change"] == 0.0 and rep.bound >= 0


def test_lemma1_zero_error_keeps_divergence_terms():
    lr = MsMwC.fixed(3, 20, 0.01, record=True)
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = rng.uniform(-1, 1, 3)
        lr.begin_round(m)
        lr.end_round(m)
    rep = bounds.lemma1_rhs(lr.history, np.eye(3)[0])
    assert rep.terms["correction_sum"] == 0.0 and rep.terms["negative_term"] == 0.0
    assert rep.bound == pytest.approx(rep.terms["kl_over_eta"] + rep.terms["rate_change"])


def test_lemma1_thm1_run_holds():
    rng = np.random.default_rng(1)
    lr = MsMwC.thm1(3, 50, record=True)
    for _ in range(50):
        lr.begin_round(rng.uniform(-1, 1, 3))
        lr.end_round(rng.uniform(-1, 1, 3))
    assert all(bounds.lemma1_rhs(lr.history, u).holds for u in np.eye(3))


def test_theorem_examples():
    L = np.zeros((100, 4))
    L[:, 0] = 1.0
    u = np.eye(4)[0]
    assert bounds.theorem_bound("thm9", L, np.zeros_like(L), u).terms["variance"] == pytest.approx(10.0)
    zero = np.zeros((10, 3))
    rep = bounds.theorem_bound("thm8", zero, zero, np.array([0.3, 0.4, 0.0]))
    assert rep.bound == 0.0
    rep = bounds.theorem_bound("thm10", zero, zero, np.array([0.6, 0.8, 0.0]))
    assert rep.bound == pytest.approx(rep.audit * 1.0)
    assert rep.audit == bounds.OLO_AUDIT
    with pytest.raises(ValueError):
        bounds.theorem_bound("thm99", zero, zero)


def test_theorem_ids_and_audit_defaults():
    assert bounds.theorem_ids() == sorted(f"thm{i}" for i in (1, 4, 5, 6, 7, 8, 9, 10, 11))
    L = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert bounds.theorem_bound("thm1", L, 0 * L, np.eye(2)[0]).audit == bounds.EXPERT_AUDIT
    assert bounds.theorem_bound("thm1", L, 0 * L, np.eye(2)[0], audit=7).audit == 7


def test_thm4_variance_floor():
    L = np.zeros((5, 2))
    rep = bounds.theorem_bound("thm4", L, L, np.eye(2)[0])
    assert rep.terms["complexity"] == pytest.approx(math.log(2) + math.log(3))


@given(st.integers(0, 10_000))
def test_rank_estimator(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 9))
    k = int(rng.integers(1, d + 1))
    E = rng.standard_normal((40, k)) @ rng.standard_normal((k, d))
    assert bounds.numerical_rank(E.T @ E) == k


@given(st.integers(0, 10_000))
def test_evaluators_are_pure(seed):
    rng = np.random.default_rng(seed)
    L, M = rng.uniform(-1, 1, (30, 3)), rng.uniform(-1, 1, (30, 3))
    u = rng.dirichlet(np.ones(3))
    L0, M0 = L.copy(), M.copy()
    a = bounds.theorem_bound("thm10", L, M, u).bound
    b = bounds.theorem_bound("thm10", L, M, u).bound
    assert a == b and np.array_equal(L, L0) and np.array_equal(M, M0)


def test_report_serializes_to_plain_floats():
    rep = bounds.theorem_bound("thm9", np.ones((4, 2)), np.zeros((4, 2)), np.array([1.0, 0.0]), realized=np.float64(1))
    d = rep.to_dict()
    assert type(d["bound"]) is float and type(d["realized"]) is float and d["holds"] is True
