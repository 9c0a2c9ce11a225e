import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msmwc.harness import (
    ENV_KINDS,
    EnvironmentSpec,
    Hedge,
    LearnerRuntimeError,
    build_environment,
    build_learner,
    generate,
    oracle_reference,
    run,
)


def test_gap_stochastic_mean_gap():
    L = build_environment(EnvironmentSpec.make("gap_stochastic", 2, 100_000, 0, gap=0.2, best=0)).losses
    gap = float(np.mean(L[:, 1] - L[:, 0]))
    assert abs(gap - 0.2) <= 0.01
    assert np.all(np.abs(L) <= 1)


def test_multiscale_ranges():
    L = build_environment(EnvironmentSpec.make("multiscale", 2, 5000, 0, ranges=[1, 4])).losses
    assert np.all(np.abs(L[:, 0]) <= 1) and np.all(np.abs(L[:, 1]) <= 4)


def test_interval_trap_parameters():
    meta = build_environment(EnvironmentSpec.make("interval_trap", 2, 100_000, 0)).meta
    assert meta["eps"] == pytest.approx(0.1) and meta["L"] == 31
    a, b = meta["interval"]
    assert b - a + 1 == 31


def test_bernstein_condition_empirically():
    kappa, delta = 0.5, 0.5
    L = build_environment(EnvironmentSpec.make("bernstein", 3, 100_000, 0, kappa=kappa, gap=delta)).losses
    x = L[:, 1] - L[:, 0]
    lhs, rhs = np.mean(x) ** kappa, delta * np.mean(x**2)
    assert lhs >= rhs * 0.95


def test_switching_planted_best_wins_segments():
    wins, total = 0, 0
    for seed in range(20):
        env = build_environment(EnvironmentSpec.make("switching", 4, 10_000, seed))
        for (a, b), i in zip(env.meta["partition"], env.meta["best"]):
            wins += int(np.argmin(env.losses[a - 1 : b].sum(axis=0)) == i)
            total += 1
    assert wins / total >= 0.99


def test_partition_covers_horizon():
    meta = build_environment(EnvironmentSpec.make("switching", 3, 1003, 1)).meta
    parts = meta["partition"]
    assert parts[0][0] == 1 and parts[-1][1] == 1003
    assert all(b1 + 1 == a2 for (_, b1), (a2, _) in zip(parts, parts[1:]))


def test_growing_range_has_exact_jump():
    T = 40
    env = build_environment(EnvironmentSpec.make("growing_range", 2, T, 0))
    j = env.meta["jumps"][0]
    assert j == T // 2 + 1 and np.max(np.abs(env.losses[j - 1])) == T + 1


@pytest.mark.parametrize("kind", [k for k in ENV_KINDS if k != "interval_trap"])
def test_reproducible_by_seed_and_round(kind):
    spec = EnvironmentSpec.make(kind, 3, 60, 5)
    first = generate(spec, 31)
    build_environment.cache_clear()
    assert np.array_equal(first, generate(spec, 31))
    other = EnvironmentSpec.make(kind, 3, 60, 6)
    if kind not in ("growing_range",):
        assert not np.array_equal(build_environment(spec).losses, build_environment(other).losses)


def test_invalid_specs():
    with pytest.raises(ValueError):
        EnvironmentSpec.make("gap_stochastic", 2, 10, gap=0.0)
    with pytest.raises(ValueError):
        EnvironmentSpec.make("bernstein", 2, 10, kappa=1.5)
    with pytest.raises(ValueError):
        EnvironmentSpec.make("nonsense", 2, 10)
    with pytest.raises(ValueError):
        EnvironmentSpec.make("drifting", 2, 10, velocity=1)
    with pytest.raises(ValueError):
        generate(EnvironmentSpec.make("drifting", 2, 10), 11)


def test_oracle_reference_example():
    L = np.zeros((100, 4))
    L[:, 2] = 1.0
    assert oracle_reference(L)[2] == pytest.approx(23.55, abs=5e-3)


def test_hedge_behaviour():
    h = Hedge(3, 0.5)
    for _ in range(10):
        w = h.begin_round()
        assert w.sum() == pytest.approx(1)
        h.end_round(np.full(3, 0.4))
    assert np.allclose(h.begin_round(), np.full(3, 1 / 3))
    with pytest.raises(ValueError):
        Hedge(2, 1.0)


def test_zero_losses_zero_regret():
    res = run(EnvironmentSpec.make("adversarial_uniform", 2, 20, 0, low=0.0, high=0.0), {"kind": "thm1"})
    assert all(v == 0 for v in res.final_regrets().values())


def test_run_checkpoints_and_reports():
    res = run(EnvironmentSpec.make("adversarial_uniform", 3, 40, 0), {"kind": "thm1"})
    assert sorted({r["checkpoint"] for r in res.reports}) == [10, 20, 40]
    assert all(r["bound_id"] == "thm1" and r["holds"] for r in res.reports)


def test_run_is_deterministic():
    spec = EnvironmentSpec.make("drifting", 3, 80, 2)
    a = run(spec, {"kind": "kl"}, "last")
    b = run(spec, {"kind": "kl"}, "last")
    assert np.array_equal(a.trace.decisions, b.trace.decisions)


@given(st.sampled_from(["ons", "gd", "metagrad"]), st.integers(0, 100))
def test_olo_runs_stay_in_ball(kind, seed):
    res = run(EnvironmentSpec.make("isotropic", 3, 30, seed), {"kind": kind, "D": 0.5})
    assert np.all(np.linalg.norm(res.trace.decisions, axis=1) <= 0.5 * (1 + 1e-9))


def test_unknown_range_run_reports_restart():
    res = run(EnvironmentSpec.make("growing_range", 2, 100, 0), {"kind": "unknown_range"})
    assert [e["event"] for e in res.events] == ["restart"]
    assert res.trace.events == {51: ["restart"]}


def test_learner_failure_carries_round(monkeypatch):
    import msmwc.harness as H

    real = H.build_learner

    class Boom:
        def __init__(self, inner):
            self.inner, self.t = inner, 0

        def begin_round(self, hint=None):
            self.t += 1
            if self.t == 7:
                raise FloatingPointError("synthetic failure")
            return self.inner.begin_round(hint)

        def end_round(self, loss, correction_target=None):
            self.inner.end_round(loss, correction_target)

    monkeypatch.setattr(H, "build_learner", lambda *a, **k: (Boom(real(*a, **k)[0]), real(*a, **k)[1]))
    with pytest.raises(LearnerRuntimeError) as exc:
        run(EnvironmentSpec.make("adversarial_uniform", 2, 20, 0), {"kind": "thm1"})
    assert exc.value.t == 7 and "round 7" in str(exc.value)


def test_learner_spec_validation():
    with pytest.raises(ValueError):
        build_learner({"kind": "thm1", "typo": 1}, 2, 10)
    with pytest.raises(ValueError):
        build_learner({"kind": "ons"}, 2, 10, "bcast1")
    with pytest.raises(ValueError):
        build_learner({"kind": "wizard"}, 2, 10)


def test_naive_two_expert_reference():
    from msmwc.acceptance import naive_two_expert
    from msmwc.core import SimplexRegion
    from msmwc.learner import MsMwC

    rng = np.random.default_rng(0)
    T = 20
    hints, losses = rng.uniform(-1, 1, (T, 2)), rng.uniform(-1, 1, (T, 2))
    lr = MsMwC.fixed(2, T, [0.01, 0.003], region=SimplexRegion.full(2))
    plays = []
    for t in range(T):
        plays.append(lr.begin_round(hints[t]))
        lr.end_round(losses[t])
    assert np.max(np.abs(np.array(plays) - naive_two_expert(T, [0.01, 0.003], hints, losses))) <= 1e-10
