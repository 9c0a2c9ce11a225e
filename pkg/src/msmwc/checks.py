"""Named property checks run by ``msmwc verify``.

Checks are grouped by module and named ``<module>/<check>``. Each one raises
(usually AssertionError) on failure. ``verify`` runs the groups in order and
stops after the first group with a failure.
"""

from __future__ import annotations

import math
import tempfile
import traceback
from pathlib import Path

import numpy as np

from . import acceptance, bounds, core, entropy_omd, expert_suites, harness, learner, master, olo_base, olo_suites
from . import predictors, scale

MODULES = (
    "core_types",
    "entropy_omd",
    "msmwc",
    "predictors",
    "master",
    "expert_suites",
    "olo_base",
    "olo_suites",
    "scale_adaptation",
    "bounds",
    "harness",
    "cli",
    "acceptance",
)

REGISTRY: dict[str, dict] = {m: {} for m in MODULES}


def check(module, name=None):
    def deco(fn):
        REGISTRY[module][name or fn.__name__] = fn
        return fn

    return deco


def _close(a, b, tol=1e-9):
    np.testing.assert_allclose(np.asarray(a, float), np.asarray(b, float), atol=tol, rtol=0)


# ---------------------------------------------------------------------------
# core_types


@check("core_types")
def regret_examples():
    tr = core.RegretTrace(2)
    for _ in range(3):
        tr.append([1.0, 0.0], [1.0, 0.0])
    assert core.regret(tr, [0.0, 1.0]) == 3.0
    assert core.regret(tr, [1.0, 0.0]) == 0.0


@check("core_types")
def regret_additivity():
    rng = np.random.default_rng(0)
    tr = core.RegretTrace(3)
    for _ in range(40):
        tr.append(rng.dirichlet(np.ones(3)), rng.uniform(-1, 1, 3))
    u = rng.dirichlet(np.ones(3))
    parts = core.regret(tr, u, (1, 13)) + core.regret(tr, u, (14, 30)) + core.regret(tr, u, (31, 40))
    assert abs(parts - core.regret(tr, u)) < 1e-12


@check("core_types")
def protocol_alternation():
    lr = learner.MsMwC.thm1(2, 10)
    try:
        lr.end_round(np.zeros(2))
    except core.ProtocolError:
        pass
    else:
        raise AssertionError("end_round before begin_round accepted")
    lr.begin_round()
    try:
        lr.begin_round()
    except core.ProtocolError:
        return
    raise AssertionError("two begin_round calls accepted")


# ---------------------------------------------------------------------------
# entropy_omd


@check("entropy_omd")
def solve_examples():
    half = np.array([0.5, 0.5])
    x = np.array([math.log(9), 0.0])
    _close(entropy_omd.solve(half, x, np.ones(2)), [0.1, 0.9], 1e-12)
    region = core.SimplexRegion.truncated(2, 0.25)
    _close(entropy_omd.solve(half, x, np.ones(2), region), [0.25, 0.75], 1e-12)
    _close(entropy_omd.solve(half, np.full(2, 3.7), np.ones(2)), half, 1e-12)


@check("entropy_omd")
def optimality_certificate():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = int(rng.integers(2, 7))
        anchor = rng.dirichlet(np.ones(d)) * 0.9 + 0.1 / d
        x = rng.uniform(-2, 2, d)
        rates = rng.uniform(0.1, 2, d)
        region = core.SimplexRegion(d, np.ones(d, bool), rng.uniform(0, 0.8 / d, d))
        w = entropy_omd.solve(anchor, x, rates, region)
        assert region.contains(w, 1e-10)
        fw = entropy_omd.objective(w, anchor, x, rates)
        for v in list(region.vertices()) + list(region.sample(rng, 5)):
            assert fw <= entropy_omd.objective(v, anchor, x, rates) + 1e-9


@check("entropy_omd")
def bregman_examples():
    assert abs(entropy_omd.bregman([0.0, 1.0], [0.5, 0.5], [1.0, 1.0]) - math.log(2)) < 1e-12
    assert abs(entropy_omd.bregman([0.0, 1.0], [0.5, 0.5], [2.0, 2.0]) - math.log(2) / 2) < 1e-12


@check("entropy_omd")
def brute_force_equivalence():
    res = acceptance.criterion_1(n=40, seed=3)
    assert res.passed, res.details


# ---------------------------------------------------------------------------
# msmwc


@check("msmwc")
def empty_history_rate():
    lr = learner.MsMwC.thm1(2, 100)
    lr.begin_round()
    _close(lr.rates, [1 / 64, 1 / 64], 0)


@check("msmwc")
def multiplicative_stability():
    res = acceptance.criterion_2(runs=5, T=200, seed=4)
    assert res.passed, res.details


@check("msmwc")
def lemma1_audit():
    res = acceptance.criterion_3(runs=10, seed=5)
    assert res.passed, res.details


@check("msmwc")
def rate_monotonicity():
    rng = np.random.default_rng(2)
    lr = learner.MsMwC.thm1(3, 300, record=True)
    for _ in range(300):
        lr.begin_round(rng.uniform(-1, 1, 3))
        lr.end_round(rng.uniform(-1, 1, 3))
    assert np.all(np.diff(lr.history["rates"], axis=0) <= 0)


# ---------------------------------------------------------------------------
# predictors


@check("predictors")
def predictor_examples():
    _close(predictors.pre_hint("avg", [[1, 0], [0, 1]]), [0.5, 0.5])
    _close(predictors.pre_hint("last", np.zeros((0, 3))), np.zeros(3))
    _close(predictors.correction_target("bcast1", np.zeros(2), [0.5, 0.5], [0.2, -0.4]), [0.2, 0.2])
    _close(predictors.correction_target("bcast_self", np.zeros(2), [0.5, 0.5], [1.0, 0.0]), [0.5, 0.5])
    m = predictors.correction_target("opt_recentered:last", [0.1, 0.3], [0.5, 0.5], [0.5, 0.1])
    _close(m, [0.2, 0.4], 1e-12)


@check("predictors")
def recentered_cap():
    assert predictors.PredictorKind.parse("opt_recentered:last").rate_cap == 1 / 128
    assert predictors.PredictorKind.parse("last").rate_cap == 1 / 64


# ---------------------------------------------------------------------------
# master


@check("master")
def prior_examples():
    bases = [master.SingleBank(learner.MsMwC.fixed(2, 10, 0.01)) for _ in range(3)]
    pool = master.ExpertPool([1 / 64, 1 / 128, 1 / 256], bases)
    _close(pool.p_prime, [16 / 21, 4 / 21, 1 / 21], 1e-15)


@check("master")
def aggregation_linearity():
    rng = np.random.default_rng(3)
    bases = [learner.MsMwC.fixed(3, 50, r) for r in (0.01, 0.005)]
    pool = master.ExpertPool([1 / 64, 1 / 128], [master.SingleBank(b) for b in bases])
    for _ in range(50):
        w = pool.begin_round(rng.uniform(-1, 1, 3))
        loss = rng.uniform(-1, 1, 3)
        assert abs(w @ loss - pool.p @ (pool.decisions @ loss)) < 1e-12
        pool.end_round(loss)


@check("master")
def master_audit():
    res = acceptance.criterion_4(runs=5, T=100, seed=6)
    assert res.passed, res.details


# ---------------------------------------------------------------------------
# expert_suites


@check("expert_suites")
def suite_sizes():
    _close(expert_suites.kl_rates(100), [1 / 64 / 2**k for k in range(7)], 0)
    assert expert_suites.kl_rates(2).size == 1
    ks, sup = expert_suites.multiscale_grid([1, 4], 16)
    assert ks == [2, 3, 4, 5, 6] and sup[0].tolist() == [True, False] and sup[2].tolist() == [True, True]
    assert expert_suites.unknown_range_rates(1.0, 10).size == 8


@check("expert_suites")
def grid_coverage():
    # below the smallest grid rate (possible when T is not a power of two)
    # the nearest rate is still within a factor 2 from above
    for T in (100, 1000, 1024):
        etas = expert_suites.kl_rates(T)
        for target in np.geomspace(1 / (64 * T), 1 / 64, 200):
            if target < etas.min():
                assert etas.min() <= 2 * target
            else:
                assert np.any((etas <= target * (1 + 1e-12)) & (target <= 2 * etas * (1 + 1e-12)))


@check("expert_suites")
def switching_floors():
    rng = np.random.default_rng(4)
    T, d = 64, 3
    pool = expert_suites.build_switching(d, T)
    for _ in range(T):
        pool.begin_round(np.zeros(d))
        assert pool.p.min() >= 1 / T - 1e-12
        assert pool.decisions.min() >= 1 / (d * T) - 1e-12
        pool.end_round(rng.uniform(-1, 1, d))


# ---------------------------------------------------------------------------
# olo_base


@check("olo_base")
def projection_examples():
    ball = olo_base.DecisionRegion.ball(2, 1.0)
    _close(olo_base.project_quadratic(np.array([2.0, 0.0]), np.eye(2), ball), [1, 0], 1e-9)
    _close(olo_base.project_quadratic(np.array([2.0, 0.0]), np.diag([4.0, 1.0]), ball), [1, 0], 1e-9)
    _close(olo_base.project_quadratic(np.array([0.3, 0.2]), np.diag([4.0, 1.0]), ball), [0.3, 0.2], 0)


@check("olo_base")
def linear_algebra_oracles():
    res = acceptance.criterion_11(trials=20, seed=7)
    assert res.passed, res.details


@check("olo_base")
def ons_gradient_example():
    ons = olo_base.OnlineNewtonStep(2, 1 / 256, 10.0)
    ons.w = np.array([[1.0, 0.0]])
    g = ons._gradient(np.array([1.0, 0.0]), np.array([1.0, 0.0]), None)
    _close(g, [[1.125, 0.0]], 1e-15)


@check("olo_base")
def optgd_one_step_bound():
    rng = np.random.default_rng(8)
    gd = olo_base.Solo(olo_base.OptimisticGD(3, 0.1, 1.0))
    bank = gd.bank
    u = rng.standard_normal(3)
    u /= 2 * np.linalg.norm(u)
    for _ in range(100):
        m = rng.uniform(-1, 1, 3)
        wp = bank.w_prime[0].copy()
        w = gd.begin_round(m)
        loss = rng.uniform(-1, 1, 3)
        gd.end_round(loss)
        lhs, rhs = bounds.optgd_step_bound(w, wp, bank.w_prime[0], u, loss, m, 0.1)
        assert lhs <= rhs + 1e-12


# ---------------------------------------------------------------------------
# olo_suites


@check("olo_suites")
def grid_counts():
    assert olo_suites.ons_parts(4, 2, 16).etas.size == 32
    assert olo_suites.gd_parts(2, 2, 4).etas.size == 8
    mg = olo_suites.metagrad_parts(1, 2, 8)
    assert mg.etas.size == 4 and mg.etas[0] == 1 / 128
    assert olo_suites.onsul_rates(1.0, 1.0, 10).size == 7


@check("olo_suites")
def union_ordering():
    u = olo_suites.build_union3(1.0, 2, 16)
    sizes = [olo_suites.ons_parts(1.0, 2, 16).etas.size, olo_suites.gd_parts(1.0, 2, 16).etas.size,
             olo_suites.adagrad_parts(1.0, 2, 16).etas.size]
    assert u.K == sum(sizes)
    prefixes = [lab.split("(")[0] for lab in u.labels]
    assert prefixes == ["ons"] * sizes[0] + ["gd"] * sizes[1] + ["ag"] * sizes[2]


# ---------------------------------------------------------------------------
# scale_adaptation


@check("scale_adaptation")
def truncation_examples():
    _close(scale.truncate_loss([2, 0], [0, 0], 1, 2), [1, 0], 0)
    _close(scale.truncate_loss([5, 1], [1, 1], 1, 4), [2, 1], 0)


@check("scale_adaptation")
def single_restart():
    res = acceptance.criterion_8(d=3, T=200)
    assert res.passed, res.details


# ---------------------------------------------------------------------------
# bounds


@check("bounds")
def f_kl():
    assert bounds.f_kl(0.3, 0.3) == 0.0
    assert abs(bounds.f_kl(0.0, 0.7) - 0.7) < 1e-15
    assert abs(bounds.f_kl(1.0, 0.5) - (math.log(2) - 0.5)) < 1e-12
    grid = np.linspace(0, 1, 11)
    for b in (0.1, 0.5, 0.9):
        for a1 in grid:
            for a2 in grid:
                mid = bounds.f_kl(0.5 * (a1 + a2), b)
                assert mid <= 0.5 * (bounds.f_kl(a1, b) + bounds.f_kl(a2, b)) + 1e-12


@check("bounds")
def theorem_examples():
    L = np.zeros((100, 4))
    L[:, 0] = 1.0
    u = np.array([1.0, 0, 0, 0])
    rep = bounds.theorem_bound("thm9", L, np.zeros_like(L), u)
    assert abs(rep.terms["variance"] - 10.0) < 1e-12
    rep = bounds.theorem_bound("thm10", np.zeros((5, 3)), np.zeros((5, 3)), np.array([0.6, 0.8, 0.0]))
    assert abs(rep.bound - rep.audit * 1.0) < 1e-12


@check("bounds")
def rank_estimator():
    rng = np.random.default_rng(9)
    for _ in range(20):
        d = int(rng.integers(2, 9))
        k = int(rng.integers(1, d + 1))
        E = rng.standard_normal((30, k)) @ rng.standard_normal((k, d))
        assert bounds.numerical_rank(E.T @ E) == k


# ---------------------------------------------------------------------------
# harness


@check("harness")
def environment_reproducibility():
    spec = harness.EnvironmentSpec.make("gap_stochastic", 3, 50, 11)
    harness.build_environment.cache_clear()
    a = harness.generate(spec, 17)
    harness.build_environment.cache_clear()
    assert np.array_equal(a, harness.generate(spec, 17))


@check("harness")
def interval_trap_parameters():
    env = harness.build_environment(harness.EnvironmentSpec.make("interval_trap", 2, 100_000, 0))
    assert abs(env.meta["eps"] - 0.1) < 1e-12 and env.meta["L"] == 31


@check("harness")
def hedge_reference():
    L = np.zeros((100, 4))
    L[:, 0] = 1.0
    assert abs(harness.oracle_reference(L)[0] - 2 * math.sqrt(100 * math.log(4))) < 1e-12


@check("harness")
def zero_losses_zero_regret():
    res = harness.run(harness.EnvironmentSpec.make("adversarial_uniform", 2, 20, 0, low=0.0, high=0.0),
                      {"kind": "thm1"}, "zero")
    assert all(v == 0 for v in res.final_regrets().values())


@check("harness")
def naive_reference_agreement():
    res = acceptance.criterion_12(instances=4, seed=8)
    assert res.passed, res.details


# ---------------------------------------------------------------------------
# cli


@check("cli")
def minimal_run():
    from . import cli

    cfg = {"environment": {"kind": "adversarial_uniform"}, "learner": {"kind": "thm1"},
           "predictor": "zero", "d": 2, "T": 100}
    with tempfile.TemporaryDirectory() as tmp:
        files = cli.run_config(cfg, Path(tmp) / "out")
        assert files == ["summary.json", "trace.csv"]


@check("cli")
def malformed_config():
    from . import cli

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "out"
        try:
            cli.run_config({"environment": {"kind": "adversarial_uniform"}, "d": 2}, out)
        except cli.ConfigError:
            assert not out.exists()
            return
    raise AssertionError("malformed config accepted")


# ---------------------------------------------------------------------------
# acceptance


def _acceptance_check(fn):
    def inner():
        res = fn()
        assert res.passed, res.line()

    return inner


for _i, _fn in enumerate(acceptance.CRITERIA, start=1):
    REGISTRY["acceptance"][f"criterion_{_i:02d}"] = _acceptance_check(_fn)


# ---------------------------------------------------------------------------


def verify(only=None, echo=None):
    """Run the registry; returns a JSON-ready report."""
    if only is not None and only not in REGISTRY:
        raise KeyError(f"unknown module {only!r}; choose from {', '.join(MODULES)}")
    modules = [only] if only else list(MODULES)
    passed = []
    for module in modules:
        failures = []
        for name, fn in REGISTRY[module].items():
            full = f"{module}/{name}"
            try:
                fn()
            except Exception as exc:
                failures.append({"check": full, "error": f"{type(exc).__name__}: {exc}",
                                 "traceback": traceback.format_exc(limit=3)})
                if echo:
                    echo(f"FAIL {full}")
            else:
                passed.append(full)
                if echo:
                    echo(f"ok   {full}")
        if failures:
            return {"status": "fail", "module": module, "failures": failures, "passed": passed}
    return {"status": "pass", "failures": [], "passed": passed}
