import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msmwc.predictors import HintStream, PredictorKind, correction_target, pre_hint


def test_running_average_example():
    assert pre_hint("running_average", [[1, 0], [0, 1]]).tolist() == [0.5, 0.5]


def test_last_loss_starts_at_zero():
    assert pre_hint("last_loss", np.zeros((0, 3))).tolist() == [0, 0, 0]


def test_broadcast_pre_hint_is_zero():
    assert pre_hint("own_loss_broadcast", [[0.3, 0.4]]).tolist() == [0, 0]


def test_correction_target_examples():
    assert correction_target("expert_one_broadcast", [0, 0], [0.5, 0.5], [0.2, -0.4]).tolist() == [0.2, 0.2]
    assert correction_target("own_loss_broadcast", [0, 0], [0.5, 0.5], [1.0, 0.0]).tolist() == [0.5, 0.5]
    m = correction_target("opt_recentered:last", [0.1, 0.3], [0.5, 0.5], [0.5, 0.1])
    assert np.allclose(m, [0.2, 0.4], atol=1e-15)


def test_parse_and_caps():
    k = PredictorKind.parse("opt_recentered:avg")
    assert str(k) == "opt_recentered:avg" and k.broadcast and k.rate_cap == 1 / 128
    assert PredictorKind.parse("opt_recentered").inner.name == "zero"
    with pytest.raises(ValueError):
        PredictorKind.parse("psychic")
    with pytest.raises(ValueError):
        PredictorKind.parse("opt_recentered:opt_recentered")


kinds = st.sampled_from(["bcast1", "bcast_self", "opt_recentered:last", "opt_recentered:avg"])


@given(kinds, st.integers(0, 10_000))
def test_broadcast_offset_is_coordinate_constant(kind, seed):
    rng = np.random.default_rng(seed)
    d = 4
    pre = pre_hint(kind, rng.uniform(-1, 1, (3, d)))
    w = rng.dirichlet(np.ones(d))
    m = correction_target(kind, pre, w, rng.uniform(-1, 1, d))
    off = m - pre
    assert np.ptp(off) < 1e-12


@given(st.integers(0, 10_000))
def test_target_ranges(seed):
    rng = np.random.default_rng(seed)
    d = 5
    pre = pre_hint("last", rng.uniform(-1, 1, (2, d)))
    w = rng.dirichlet(np.ones(d))
    loss = rng.uniform(-1, 1, d)
    assert np.all(np.abs(correction_target("bcast_self", pre, w, loss)) <= 1)
    assert np.all(np.abs(correction_target("opt_recentered:last", pre, w, loss)) <= 3)


@given(st.integers(0, 10_000))
def test_streaming_average_matches_offline(seed):
    rng = np.random.default_rng(seed)
    L = rng.uniform(-1, 1, (30, 3))
    hs = HintStream("avg", 3)
    online = np.zeros(3)
    offline = np.zeros(3)
    for t in range(30):
        online += (L[t] - hs.pre_hint()) ** 2
        offline += (L[t] - pre_hint("avg", L[:t], d=3)) ** 2
        hs.observe(L[t])
    assert np.allclose(online, offline, atol=1e-9)
