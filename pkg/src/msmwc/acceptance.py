"""The thirteen end-to-end acceptance checks.

Each ``criterion_*`` function runs its experiment at the stated sizes and
returns a :class:`CriterionResult`; ``run_all`` runs them in order. Both the
``verify`` command and the acceptance test module use these functions.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import bounds, entropy_omd
from .core import SimplexRegion, regret
from .expert_suites import build_kl, build_switching
from .harness import EnvironmentSpec, best_in_ball, build_environment, oracle_reference, run
from .learner import MsMwC
from .master import ExpertPool, SharedBank, SingleBank
from .olo_base import (
    DecisionRegion,
    ball_kkt_residual,
    project_quadratic,
    rank_one_inverse_update,
    sqrtm_psd,
)
from .olo_suites import adagrad_parts, gd_parts, ons_parts


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        summary = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] criterion {self.number:2d} {self.title} ({self.seconds:.1f}s) {summary}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(number, title):
    def wrap(fn):
        def inner(*args, **kw):
            t0 = time.perf_counter()
            passed, details = fn(*args, **kw)
            return CriterionResult(number, title, bool(passed), details, time.perf_counter() - t0)

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


# ---------------------------------------------------------------------------
# 1. solver vs grid search


def _grid_min_2(anchor, cost, rates, lb):
    """Coarse-to-fine search over w = (x, 1 - x)."""
    lo, hi = lb[0], 1.0 - lb[1]
    center, half, step = 0.5 * (lo + hi), 0.5 * (hi - lo), 1e-2
    for _ in range(3):
        xs = np.arange(max(lo, center - half), min(hi, center + half) + step / 2, step)
        xs = np.clip(np.append(xs, [lo, hi] if half >= 0.5 * (hi - lo) else []), lo, hi)
        W = np.stack([xs, 1 - xs], axis=1)
        vals = _objective_rows(W, anchor, cost, rates)
        center = xs[np.argmin(vals)]
        half, step = 2 * step, step / 10
    return np.array([center, 1 - center])


def _grid_min_3(anchor, cost, rates, lb):
    center = None
    step = 1e-2
    half = None
    for _ in range(3):
        if center is None:
            g = np.arange(0, 1 + step / 2, step)
            X, Y = np.meshgrid(g, g, indexing="ij")
        else:
            g = np.arange(-half, half + step / 2, step)
            X, Y = np.meshgrid(center[0] + g, center[1] + g, indexing="ij")
        W = np.stack([X.ravel(), Y.ravel(), 1 - X.ravel() - Y.ravel()], axis=1)
        ok = np.all(W >= lb - 1e-15, axis=1)
        W = np.clip(W[ok], 0, 1)
        vals = _objective_rows(W, anchor, cost, rates)
        center = W[np.argmin(vals)]
        half, step = 3 * step, step / 10
    return center


def _objective_rows(W, anchor, cost, rates):
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(W > 0, W * np.log(W / anchor), 0.0) - W + anchor
    return W @ cost + ent @ (1.0 / rates)


def _random_instance(rng, d, active_lb):
    anchor = rng.dirichlet(np.ones(d))
    anchor = 0.9 * anchor + 0.1 / d
    cost = rng.uniform(-1, 1, d)
    rates = rng.uniform(0.2, 2.0, d)
    lb = np.zeros(d)
    if active_lb:
        # make the bound bind on the coordinate the update would push lowest
        w = entropy_omd.solve(anchor, cost, rates)
        i = int(np.argmin(w))
        lb[i] = min(0.9 / d, w[i] + rng.uniform(0.02, 0.2))
    return anchor, cost, rates, lb


@_timed(1, "solver matches grid minimization")
def criterion_1(n=200, tol=2e-4, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    solve_time = 0.0
    active = 0
    for k in range(n):
        d = 2 if k % 2 == 0 else 3
        anchor, cost, rates, lb = _random_instance(rng, d, active_lb=(k % 4) >= 2)
        region = SimplexRegion(d, np.ones(d, bool), lb)
        t0 = time.perf_counter()
        w = entropy_omd.solve(anchor, cost, rates, region)
        solve_time += time.perf_counter() - t0
        active += int(np.any(np.isclose(w, lb) & (lb > 0)))
        ref = _grid_min_2(anchor, cost, rates, lb) if d == 2 else _grid_min_3(anchor, cost, rates, lb)
        worst = max(worst, float(np.max(np.abs(w - ref))))
    return worst <= tol and solve_time < 5.0, {
        "max_coord_error": worst,
        "active_bound_instances": active,
        "solver_seconds": solve_time,
    }


# ---------------------------------------------------------------------------
# 2. multiplicative stability


@_timed(2, "multiplicative stability of weights")
def criterion_2(runs=50, T=500, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = 1 / math.sqrt(2) - 1e-10, math.sqrt(2) + 1e-10
    rmin, rmax = np.inf, 0.0
    for _ in range(runs):
        d = int(rng.integers(2, 9))
        lr = MsMwC.thm1(d, T, record=True)
        L = rng.uniform(-1, 1, (T, d))
        for t in range(T):
            lr.begin_round()
            lr.end_round(L[t])
        h = lr.history
        r_play = h["w_play"] / h["w_prime"]
        r_next = h["w_prime"][1:] / h["w_prime"][:-1]
        rmin = min(rmin, r_play.min(), r_next.min())
        rmax = max(rmax, r_play.max(), r_next.max())
    return lo <= rmin and rmax <= hi, {"min_ratio": float(rmin), "max_ratio": float(rmax)}


# ---------------------------------------------------------------------------
# 3. single-layer guarantee


@_timed(3, "single-layer inequality audit")
def criterion_3(runs=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = np.inf
    for k in range(runs):
        d = int(rng.integers(2, 7))
        T = int(rng.integers(20, 200))
        region = SimplexRegion(d, np.ones(d, bool), rng.uniform(0, 0.5 / d, d)) if k % 2 else SimplexRegion.full(d)
        rates = rng.uniform(1e-3, 1.0 / 64, d)
        lr = MsMwC.fixed(d, T, rates, region=region, record=True)
        for _ in range(T):
            m = rng.uniform(-1, 1, d)
            lr.begin_round(m)
            lr.end_round(rng.uniform(-1, 1, d))
        for u in list(region.vertices()) + list(region.sample(rng, 4)):
            worst = min(worst, bounds.lemma1_rhs(lr.history, u).slack())
    return worst >= -1e-6, {"min_slack": float(worst)}


# ---------------------------------------------------------------------------
# 4. master guarantee


@_timed(4, "master inequality audit")
def criterion_4(runs=50, T=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(runs):
        d = int(rng.integers(2, 6))
        K = int(rng.integers(2, 9))
        etas = rng.uniform(1e-3, 1.0 / 64, K)
        bases = [MsMwC.fixed(d, T, rng.uniform(1e-3, 1.0 / 64), record=True) for _ in range(K)]
        pool = ExpertPool(etas, [SingleBank(b) for b in bases], record=True, T=T)
        for _ in range(T):
            pool.begin_round(rng.uniform(-1, 1, d))
            pool.end_round(rng.uniform(-1, 1, d))
        comps = list(np.eye(d)) + list(rng.dirichlet(np.ones(d), 3))
        for k in range(K):
            for u in comps:
                base_reg = bounds.lemma1_rhs(bases[k].history, u).realized
                worst = min(worst, bounds.master_bound_rhs(pool.history, etas, k, u, base_reg).slack())
    return worst >= -1e-6, {"min_slack": float(worst)}


# ---------------------------------------------------------------------------
# 5. impossible tuning

IMPLICATION_PREDICTORS = ("last", "bcast1", "bcast_self", "opt_recentered:last")


@_timed(5, "simultaneous per-expert bounds")
def criterion_5(d=8, T=10_000, seeds=8):
    ldt = math.log(d * T)
    worst_bound = 0.0
    worst_hedge = 0.0
    for kind in ("adversarial_uniform", "multiscale"):
        for seed in range(seeds):
            env = EnvironmentSpec.make(kind, d, T, seed)
            for pred in ("zero",) + IMPLICATION_PREDICTORS:
                res = run(env, {"kind": "thm1"}, pred, checkpoints=[T])
                tr = res.trace
                reg = np.array([regret(tr, e) for e in np.eye(d)])
                var = np.sum(tr.errors**2, axis=0)
                worst_bound = max(worst_bound, float(np.max(reg / (50 * (ldt + np.sqrt(ldt * var))))))
                if pred == "zero":
                    ref = oracle_reference(tr.losses) + 50 * ldt
                    worst_hedge = max(worst_hedge, float(np.max(reg / (3 * ref))))
    return worst_bound <= 1 and worst_hedge <= 1, {
        "max_regret_over_bound": worst_bound,
        "max_regret_over_3x_reference": worst_hedge,
    }


# ---------------------------------------------------------------------------
# 6. fast rates


@_timed(6, "fast rates on stochastic environments")
def criterion_6(d=4, T=20_000, seeds=16, gaps=(0.05, 0.1, 0.2)):
    ldt = math.log(d * T)
    pred = "opt_recentered:last"
    ok = True
    details = {}
    for gap in gaps:
        half, full = [], []
        for seed in range(seeds):
            env = EnvironmentSpec.make("gap_stochastic", d, T, seed, gap=gap)
            res = run(env, {"kind": "thm1"}, pred, checkpoints=[T])
            u = np.eye(d)[res.env_meta["best"]]
            half.append(regret(res.trace, u, (1, T // 2)))
            full.append(regret(res.trace, u))
        mh, mf = float(np.mean(half)), float(np.mean(full))
        growth = abs(mf - mh) / abs(mh) if mh != 0 else math.inf
        ok &= growth < 0.25 and mf <= 50 * ldt / gap
        details[f"gap{gap}_mean_regret"] = mf
        details[f"gap{gap}_growth"] = growth
    kappa, delta = 0.5, 0.5
    regs = []
    for seed in range(seeds):
        env = EnvironmentSpec.make("bernstein", d, T, seed, kappa=kappa, gap=delta)
        res = run(env, {"kind": "thm1"}, pred, checkpoints=[T])
        regs.append(regret(res.trace, np.eye(d)[res.env_meta["best"]]))
    limit = 100 * (ldt / delta) ** (1 / (2 - kappa)) * T ** ((1 - kappa) / (2 - kappa))
    details["bernstein_mean_regret"] = float(np.mean(regs))
    details["bernstein_limit"] = limit
    ok &= float(np.mean(regs)) <= limit
    return ok, details


# ---------------------------------------------------------------------------
# 7. switching


def _switching_regret(pool, L, partition, best):
    T, d = L.shape
    plays = np.empty((T, d))
    zero = np.zeros(d)
    for t in range(T):
        plays[t] = pool.begin_round(zero)
        pool.end_round(L[t])
    return sum(
        float(np.sum(plays[a - 1 : b] * L[a - 1 : b]) - L[a - 1 : b, i].sum()) for (a, b), i in zip(partition, best)
    )


@_timed(7, "switching regret")
def criterion_7(d=4, T=10_000, seeds=3):
    ldt = math.log(d * T)
    ok = True
    ratios, ratio_bound = [], []
    for seed in range(seeds):
        env = build_environment(EnvironmentSpec.make("switching", d, T, seed, gap=0.3))
        parts, best = env.meta["partition"], env.meta["best"]
        err2 = env.losses**2
        limit = 50 * (
            len(parts) * ldt + sum(math.sqrt(ldt * float(err2[a - 1 : b, i].sum())) for (a, b), i in zip(parts, best))
        )
        sw = _switching_regret(build_switching(d, T), env.losses, parts, best)
        flat = _switching_regret(build_kl(np.full(d, 1.0 / d), T), env.losses, parts, best)
        ratios.append(flat / sw if sw > 0 else math.inf)
        ratio_bound.append(sw / limit)
        ok &= sw <= limit and flat >= 2 * sw
    return ok, {
        "advantage_per_seed": [round(r, 3) for r in ratios],
        "max_regret_over_bound": float(max(ratio_bound)),
    }


# ---------------------------------------------------------------------------
# 8. unknown range


@_timed(8, "unknown range with one restart")
def criterion_8(d=4, T=2000, seed=0):
    env = EnvironmentSpec.make("growing_range", d, T, seed, schedule=[[1, 1.0], [T // 2 + 1, float(T + 1)]])
    res = run(env, {"kind": "unknown_range", "B0": 1.0}, "zero", checkpoints=[T])
    tracker = res.learner.tracker
    restarts = sum(1 for e in res.events if e["event"] == "restart")
    B = max(tracker.B0, float(np.max(np.abs(res.trace.errors))))
    worst = 0.0
    for u in np.eye(d):
        rep = bounds.theorem_bound("thm7", res.trace.losses, res.trace.hints, u, B=B, realized=regret(res.trace, u))
        worst = max(worst, rep.ratio)
    ok = restarts == 1 and worst <= 1 and tracker.damage <= B
    return ok, {"restarts": restarts, "max_regret_over_bound": worst, "damage": tracker.damage, "B": B}


# ---------------------------------------------------------------------------
# 9. best of three worlds

OLO_ENVIRONMENTS = (("low_rank", "thm8", "ons"), ("isotropic", "thm9", "gd"), ("anisotropic", "thm10", "ag"))


def union_comparison(kind, d, T, D=1.0, seed=0, max_experts=1120):
    """Run ONS, GD, AdaGrad and union masters over shared banks; return regrets vs the best point."""
    L = build_environment(EnvironmentSpec.make(kind, d, T, seed)).losses
    parts = {"ons": ons_parts(D, d, T), "gd": gd_parts(D, d, T), "ag": adagrad_parts(D, d, T, max_experts=max_experts)}
    shared = {k: SharedBank(p.bank) for k, p in parts.items()}
    masters = {k: ExpertPool(p.etas, [shared[k].view()], p.labels) for k, p in parts.items()}
    masters["union"] = ExpertPool(
        np.concatenate([p.etas for p in parts.values()]),
        [shared[k].view() for k in parts],
        [lab for p in parts.values() for lab in p.labels],
    )
    plays = {k: np.empty((T, d)) for k in masters}
    zero = np.zeros(d)
    for t in range(T):
        for k, m in masters.items():
            plays[k][t] = m.begin_round(zero)
        for m in masters.values():
            m.end_round(L[t])
    u = best_in_ball(L, D)
    reg = {k: float(np.sum(p * L) - np.sum(L @ u)) for k, p in plays.items()}
    return L, u, reg


@_timed(9, "best of three worlds")
def criterion_9(d=8, T=5000, D=1.0, max_experts=1120):
    polylog = math.log(d * T)
    ok = True
    details = {}
    for kind, bid, suite in OLO_ENVIRONMENTS:
        L, u, reg = union_comparison(kind, d, T, D, max_experts=max_experts)
        best = min(reg["ons"], reg["gd"], reg["ag"])
        union_ok = reg["union"] <= 1.5 * best + 100 * polylog
        rep = bounds.theorem_bound(bid, L, np.zeros_like(L), u, audit=100, realized=reg[suite])
        ok &= union_ok and rep.holds
        details[f"{kind}_union"] = reg["union"]
        details[f"{kind}_best_single"] = best
        details[f"{kind}_{bid}_ratio"] = rep.ratio
    return ok, details


# ---------------------------------------------------------------------------
# 10. MetaGrad suite


@_timed(10, "recentered ONS suite bound")
def criterion_10(d=4, T=2000, D=1.0, n_comparators=20, seed=0):
    env = EnvironmentSpec.make("drifting", d, T, seed, domain="ball")
    res = run(env, {"kind": "metagrad", "D": D}, "last", checkpoints=[T])
    tr = res.trace
    rng = np.random.default_rng(seed + 1)
    worst = -np.inf
    for _ in range(n_comparators):
        v = rng.standard_normal(d)
        u = D * v / np.linalg.norm(v) * rng.uniform() ** (1 / d)
        rep = bounds.theorem_bound(
            "thm11", tr.losses, tr.hints, u, audit=100, realized=regret(tr, u), plays=tr.decisions, D=D
        )
        worst = max(worst, rep.realized - rep.bound)
    return worst <= 0, {"max_regret_minus_bound": float(worst)}


# ---------------------------------------------------------------------------
# 11. linear algebra


@_timed(11, "linear-algebra oracles")
def criterion_11(trials=100, seed=0):
    rng = np.random.default_rng(seed)
    sm_err = kkt = sq_err = 0.0
    for _ in range(trials):
        d = int(rng.integers(1, 33))
        B = rng.standard_normal((d, d))
        A = B @ B.T + 0.5 * np.eye(d)
        v = rng.standard_normal(d)
        upd = rank_one_inverse_update(np.linalg.inv(A), v)
        direct = np.linalg.inv(A + np.outer(v, v))
        sm_err = max(sm_err, float(np.max(np.abs(upd - direct)) / max(1.0, np.max(np.abs(direct)))))
        y = rng.standard_normal(d) * 3
        r = float(rng.uniform(0.1, 2.0))
        w = project_quadratic(y, A, DecisionRegion.ball(d, r))
        kkt = max(kkt, ball_kkt_residual(w, y, A, r) / max(1.0, float(np.linalg.norm(A @ y))))
        S = sqrtm_psd(A)
        sq_err = max(sq_err, float(np.max(np.abs(S @ S - A)) / max(1.0, np.max(np.abs(A)))))
    ok = sm_err <= 1e-8 and kkt <= 1e-9 and sq_err <= 1e-8
    return ok, {"sherman_morrison": sm_err, "kkt_residual": kkt, "sqrt_reconstruction": sq_err}


# ---------------------------------------------------------------------------
# 12. reference implementation


def naive_two_expert(T, rates, hints, losses, lower=(0.0, 0.0)):
    """Straightforward two-expert version with each argmin solved by root finding on x = w_1."""
    eta = np.asarray(rates, float)
    lo, hi = lower[0], 1.0 - lower[1]

    def argmin(anchor, cost):
        def foc(x):
            return cost[0] - cost[1] + math.log(x / anchor[0]) / eta[0] - math.log((1 - x) / anchor[1]) / eta[1]

        a, b = max(lo, 1e-300), min(hi, 1 - 1e-16)
        if foc(a) >= 0:
            x = a
        elif foc(b) <= 0:
            x = b
        else:
            x = brentq(foc, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return np.array([x, 1 - x])

    wp = np.array([0.5, 0.5])
    plays = []
    for t in range(T):
        plays.append(argmin(wp, hints[t]))
        err = losses[t] - hints[t]
        wp = argmin(wp, losses[t] + 32 * eta * err**2)
    return np.array(plays)


@_timed(12, "agreement with a naive reference")
def criterion_12(T=20, instances=20, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        rates = rng.uniform(1e-3, 1.0 / 64, 2) if k % 2 else np.full(2, rng.uniform(1e-3, 1.0 / 64))
        lower = (0.0, 0.0) if k % 3 else (0.05, 0.1)
        hints = rng.uniform(-1, 1, (T, 2))
        losses = rng.uniform(-1, 1, (T, 2))
        region = SimplexRegion(2, np.ones(2, bool), np.array(lower))
        lr = MsMwC.fixed(2, T, rates, region=region, prior=np.array([0.5, 0.5]))
        plays = []
        for t in range(T):
            plays.append(lr.begin_round(hints[t]))
            lr.end_round(losses[t])
        ref = naive_two_expert(T, rates, hints, losses, lower)
        worst = max(worst, float(np.max(np.abs(np.array(plays) - ref))))
    return worst <= 1e-10, {"max_weight_difference": worst}


# ---------------------------------------------------------------------------
# 13. determinism

DETERMINISM_CONFIG = {
    "environment": {"kind": "adversarial_uniform"},
    "learner": {"kind": "kl"},
    "predictor": "last",
    "d": 4,
    "T": 300,
    "seed": 7,
}


@_timed(13, "byte-identical outputs")
def criterion_13(config=None):
    from . import cli

    config = dict(config or DETERMINISM_CONFIG)
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for name in ("a", "b"):
            out = Path(tmp) / name
            cli.run_config(config, out)
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir() if p.name != "timing.json")
        same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    return same and len(files) >= 2, {"files_compared": len(files)}


CRITERIA = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
    criterion_11,
    criterion_12,
    criterion_13,
]


def run_all(only=None, echo=print):
    results = []
    for i, fn in enumerate(CRITERIA, start=1):
        if only and i not in only:
            continue
        res = fn()
        if echo:
            echo(res.line())
        results.append(res)
    return results
