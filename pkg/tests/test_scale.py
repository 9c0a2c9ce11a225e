import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msmwc.expert_suites import build_unknown_range
from msmwc.olo_suites import build_onsuld
from msmwc.scale import DoublingWrapper, RestartWrapper, ScaleTracker, truncate_loss


def test_truncation_examples():
    assert truncate_loss([2, 0], [0, 0], 1, 2).tolist() == [1, 0]
    assert truncate_loss([5, 1], [1, 1], 1, 4).tolist() == [2, 1]
    assert truncate_loss([0.3, -2], [0, 0], 3, 3).tolist() == [0.3, -2]


def test_truncation_rejects_bad_ranges():
    with pytest.raises(ValueError):
        truncate_loss([1, 1], [0, 0], 2, 1)
    with pytest.raises(ValueError):
        truncate_loss([1, 1], [0, 0], 0, 1)


@given(st.integers(0, 10_000))
def test_truncation_within_previous_range(seed):
    rng = np.random.default_rng(seed)
    tr = ScaleTracker(1.0)
    for _ in range(50):
        m = rng.uniform(-1, 1, 3)
        loss = m + rng.uniform(-1, 1, 3) * rng.choice([1, 5, 50])
        b_prev, b_cur = tr.observe(loss, m)
        fed = truncate_loss(loss, m, b_prev, b_cur)
        assert np.max(np.abs(fed - m)) <= b_prev * (1 + 1e-12)


def _expert_wrapper(T, d=2, B0=1.0):
    return RestartWrapper(lambda b, tr: build_unknown_range(b, T, np.full(d, 1 / d)), B0, T)


def _feed(wrapper, losses):
    for loss in losses:
        wrapper.begin_round(np.zeros(len(loss)))
        wrapper.end_round(np.asarray(loss, float))


def test_restart_fires_on_jump():
    w = _expert_wrapper(10)
    _feed(w, [[0.5, 0.5], [12.0, 0.0]])
    assert w.tracker.restarts == 1 and w.tracker.epoch_base == 12.0
    assert w.events == [(2, "restart", 12.0)]


def test_no_restart_within_range():
    w = _expert_wrapper(10)
    rng = np.random.default_rng(0)
    _feed(w, rng.uniform(-10, 10, (10, 2)))
    assert w.tracker.restarts == 0


def test_geometric_blowup_one_restart_each():
    T = 20
    w = _expert_wrapper(T)
    losses = [[1.0, 0.0]] * 3 + [[T**1 * 1.5, 0.0]] * 3 + [[T**2 * 2.0, 0.0]] * 3 + [[0.2, 0.1]] * 3
    _feed(w, losses)
    assert w.tracker.restarts == 2 <= math.log(T**2 * 2, T) + 1


@given(st.integers(0, 10_000))
def test_damage_telescopes(seed):
    rng = np.random.default_rng(seed)
    w = _expert_wrapper(30)
    scales = np.exp(rng.uniform(0, 6, 30))
    _feed(w, rng.uniform(-1, 1, (30, 2)) * scales[:, None])
    tr = w.tracker
    assert tr.damage <= tr.B - tr.B0 + 1e-9


def test_epochs_respect_factor_T():
    T = 15
    w = _expert_wrapper(T)
    rng = np.random.default_rng(4)
    bases = [w.tracker.epoch_base]
    for t in range(T):
        _feed(w, [rng.uniform(-1, 1, 2) * 4.0**t])
        if w.tracker.epoch_base != bases[-1]:
            bases.append(w.tracker.epoch_base)
    assert all(b2 / b1 > T for b1, b2 in zip(bases, bases[1:]))


def _onsuld(T, d=2):
    return DoublingWrapper(lambda D, b, tr: build_onsuld(D, b, T, d, lambda: tr.B), 1.0, T)


def test_doubling_example_values():
    w = _onsuld(50)
    w.tracker.G, w.tracker.loss_norm_sum, w.D = 1.0, 9.0, 2.0
    # emulate the check performed after a round
    need = math.sqrt(w.tracker.loss_norm_sum / w.tracker.G)
    assert need == 3.0 and w.D < need and 2 * need == 6.0


@given(st.integers(0, 10_000))
def test_doubling_count_bounded(seed):
    T = 64
    rng = np.random.default_rng(seed)
    w = _onsuld(T)
    for _ in range(T):
        w.begin_round(np.zeros(2))
        w.end_round(rng.uniform(-1, 1, 2) * rng.choice([0.01, 1.0]))
    assert w.doublings <= math.ceil(math.log2(math.sqrt(T))) + 1


def test_doubling_trigger_sequence():
    w = _onsuld(16)
    w.begin_round(np.zeros(2))
    w.end_round(np.array([0.6, 0.8]))
    # sum/G = 1 so need = 1, D_1 = 1 is not below it
    assert w.doublings == 0
    for _ in range(3):
        w.begin_round(np.zeros(2))
        w.end_round(np.array([0.6, 0.8]))
    # round 2: sqrt(2) > 1 gives D = 2 sqrt(2), which covers sqrt(3) and sqrt(4)
    assert w.doublings == 1 and w.D == pytest.approx(2 * math.sqrt(2))
    assert w.events == [(2, "doubling", w.D)]
