"""Synthetic environments, baselines and the experiment driver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import bounds
from .core import RegretTrace, RoundProtocol
from .expert_suites import build_kl, build_multiscale, build_switching, build_unknown_range
from .learner import MsMwC
from .predictors import HintStream, PredictorKind
from .scale import DoublingWrapper, RestartWrapper
from . import olo_suites

ENV_KINDS = (
    "gap_stochastic",
    "bernstein",
    "adversarial_uniform",
    "switching",
    "drifting",
    "multiscale",
    "growing_range",
    "interval_trap",
    "low_rank",
    "isotropic",
    "anisotropic",
)
_KIND_ID = {k: i for i, k in enumerate(ENV_KINDS)}

_DEFAULTS = {
    "gap_stochastic": {"gap": 0.2, "best": 0, "noise": 0.5},
    "bernstein": {"kappa": 0.5, "gap": 0.5, "best": 0, "mean": 0.2},
    "adversarial_uniform": {"low": -1.0, "high": 1.0},
    "switching": {"segments": 5, "gap": 0.3, "noise": 0.2, "collapse": "max"},
    "drifting": {"step": 0.05, "domain": "box", "radius": 1.0},
    "multiscale": {"ranges": None},
    "growing_range": {"schedule": None},
    "interval_trap": {"segment": None},
    "low_rank": {"rank": 1, "mean": 0.3, "noise": 0.5},
    "isotropic": {"mean": 0.1, "noise": 0.5},
    "anisotropic": {"mean": 0.3, "noise": 0.9},
}


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str
    d: int
    T: int
    seed: int = 0
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.d < 1 or self.T < 1:
            raise ValueError("d and T must be positive")
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", _freeze(self.params))
        p = self.options()
        if self.kind in ("gap_stochastic", "bernstein") and not 0 < p["gap"] <= 1:
            raise ValueError("gap must lie in (0, 1]")
        if self.kind == "bernstein" and not 0 <= p["kappa"] <= 1:
            raise ValueError("kappa must lie in [0, 1]")
        if self.kind == "interval_trap" and self.d != 2:
            raise ValueError("interval_trap is a two-expert construction")

    def options(self):
        out = dict(_DEFAULTS[self.kind])
        for k, v in self.params:
            if k not in out:
                raise ValueError(f"unknown parameter {k!r} for {self.kind}")
            out[k] = _thaw(v)
        return out

    @classmethod
    def make(cls, kind, d, T, seed=0, **params):
        return cls(kind, d, T, seed, _freeze(params))


def _freeze(params):
    return tuple(sorted((k, tuple(map(_freeze_item, v)) if isinstance(v, list) else v) for k, v in params.items()))


def _freeze_item(v):
    return tuple(v) if isinstance(v, list) else v


def _thaw(v):
    if isinstance(v, tuple):
        return [list(x) if isinstance(x, tuple) else x for x in v]
    return v


@dataclass
class Environment:
    spec: EnvironmentSpec
    losses: np.ndarray
    meta: dict = field(default_factory=dict)


def _rademacher(rng, shape):
    return rng.integers(0, 2, size=shape) * 2.0 - 1.0


def _partition(T, segments):
    edges = np.linspace(0, T, segments + 1).round().astype(int)
    return [(int(edges[j]) + 1, int(edges[j + 1])) for j in range(segments)]


@lru_cache(maxsize=32)
def build_environment(spec: EnvironmentSpec) -> Environment:
    """Whole loss matrix; row t-1 is l_t. Deterministic in (seed, kind)."""
    rng = np.random.default_rng([spec.seed, _KIND_ID[spec.kind]])
    d, T, p = spec.d, spec.T, spec.options()
    meta = {}
    if spec.kind == "gap_stochastic":
        mu = np.full(d, p["gap"] / 2)
        mu[p["best"]] = -p["gap"] / 2
        L = mu + p["noise"] * _rademacher(rng, (T, d))
        meta["best"] = p["best"]
    elif spec.kind == "bernstein":
        g, kappa, delta = p["mean"], p["kappa"], p["gap"]
        a = math.sqrt(g**kappa / delta)
        if a > 1 or g > a:
            raise ValueError(f"bernstein parameters give amplitude {a:.3f}; need mean <= a <= 1")
        plus = rng.random((T, d)) < (1 + g / a) / 2
        L = np.where(plus, a, -a)
        L[:, p["best"]] = 0.0
        meta.update(best=p["best"], amplitude=a)
    elif spec.kind == "adversarial_uniform":
        L = rng.uniform(p["low"], p["high"], (T, d))
    elif spec.kind == "multiscale":
        c = np.asarray(p["ranges"] if p["ranges"] is not None else 2.0 ** -np.arange(d), float)
        if c.shape != (d,):
            raise ValueError("ranges must have length d")
        L = rng.uniform(-1, 1, (T, d)) * c
        meta["ranges"] = c.tolist()
    elif spec.kind == "switching":
        parts = _partition(T, p["segments"])
        best, prev = [], -1
        L = np.empty((T, d))
        for a, b in parts:
            choices = [i for i in range(d) if i != prev] if d > 1 else [0]
            i = int(rng.choice(choices))
            mu = np.full(d, p["gap"] / 2)
            mu[i] = -p["gap"] / 2
            if prev >= 0:
                # the outgoing best expert drops to the top of the loss range
                mu[prev] = 1.0 - p["noise"] if p["collapse"] == "max" else mu[prev] + float(p["collapse"])
            L[a - 1 : b] = mu + p["noise"] * _rademacher(rng, (b - a + 1, d))
            best.append(i)
            prev = i
        meta.update(partition=parts, best=best)
    elif spec.kind == "drifting":
        L = np.empty((T, d))
        cur = rng.uniform(-0.5, 0.5, d)
        for t in range(T):
            cur = cur + p["step"] * rng.standard_normal(d)
            if p["domain"] == "ball":
                n = np.linalg.norm(cur)
                if n > p["radius"]:
                    cur *= p["radius"] / n
            else:
                cur = np.clip(cur, -p["radius"], p["radius"])
            L[t] = cur
    elif spec.kind == "growing_range":
        sched = p["schedule"] if p["schedule"] is not None else [[1, 1.0], [T // 2 + 1, float(T + 1)]]
        scale = np.ones(T)
        jumps = []
        for start, s in sorted(sched):
            scale[int(start) - 1 :] = s
            if int(start) > 1:
                jumps.append(int(start))
        L = rng.uniform(-1, 1, (T, d)) * scale[:, None]
        for j in jumps:
            row = L[j - 1]
            i = int(np.argmax(np.abs(row)))
            row[i] = math.copysign(scale[j - 1], row[i])
        meta.update(jumps=jumps)
    elif spec.kind == "interval_trap":
        eps = T ** (-1 / 5)
        Lseg = max(1, int(math.floor(T ** (3 / 10))))
        nseg = T // Lseg
        k_star = p["segment"] if p["segment"] is not None else int(rng.integers(1, nseg + 1))
        flip = (k_star - 1) * Lseg
        prob_plus = np.where(np.arange(T) < flip, 0.5 - eps, 0.5 + eps)
        L = np.zeros((T, 2))
        L[:, 1] = np.where(rng.random(T) < prob_plus, 1.0, -1.0)
        meta.update(eps=eps, L=Lseg, k_star=k_star, interval=(flip + 1, flip + Lseg))
    elif spec.kind == "low_rank":
        V = np.linalg.qr(rng.standard_normal((d, d)))[0][:, : p["rank"]]
        coef = p["noise"] * _rademacher(rng, (T, p["rank"]))
        coef[:, 0] += p["mean"]
        L = coef @ V.T
    elif spec.kind == "isotropic":
        xi = rng.standard_normal((T, d))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        L = p["mean"] * np.ones(d) / math.sqrt(d) + p["noise"] * xi
    elif spec.kind == "anisotropic":
        c = 2.0 ** -np.arange(d)
        L = (p["mean"] + p["noise"] * _rademacher(rng, (T, d))) * c / math.sqrt(np.sum(c * c))
    L.setflags(write=False)
    return Environment(spec, L, meta)


def generate(spec: EnvironmentSpec, t: int) -> np.ndarray:
    if not 1 <= t <= spec.T:
        raise ValueError(f"round {t} outside [1, {spec.T}]")
    return build_environment(spec).losses[t - 1].copy()


# ---------------------------------------------------------------------------
# baselines


class Hedge(RoundProtocol):
    """Fixed-rate exponential weights; ignores hints."""

    def __init__(self, d, eta):
        if not 0 < eta < 1:
            raise ValueError("hedge rate must lie in (0, 1)")
        self.d = d
        self.eta = float(eta)
        self.cum = np.zeros(d)
        self.t = 1
        self.w = None

    def begin_round(self, hint=None):
        self._enter_begin()
        z = -self.eta * self.cum
        z -= z.max()
        w = np.exp(z)
        self.w = w / w.sum()
        return self.w

    def end_round(self, loss, correction_target=None):
        self._enter_end()
        self.cum += np.asarray(loss, float)
        self.t += 1


def oracle_reference(losses):
    """Per-expert tuned value 2 sqrt(ln d * sum_t l_{t,i}^2) of ln d/eta + eta sum l^2."""
    losses = np.asarray(losses, float)
    d = losses.shape[1]
    return 2.0 * np.sqrt(math.log(d) * np.sum(losses**2, axis=0))


# ---------------------------------------------------------------------------
# learners

EXPERT_LEARNERS = ("thm1", "fixed", "hedge", "kl", "multiscale", "switching", "unknown_range")
OLO_LEARNERS = ("ons", "gd", "adagrad", "metagrad", "union3", "onsul", "onsuld")


def build_learner(spec, d, T, predictor="zero", env=None):
    """Instantiate the learner described by ``spec`` (a dict with ``kind``).

    Returns (learner, info) where info carries the family, the applicable
    bound ids and the parameters the bound evaluators need.
    """
    spec = dict(spec)
    kind = spec.pop("kind")
    pk = PredictorKind.parse(predictor) if isinstance(predictor, str) else predictor
    info = {"family": "expert", "bounds": [], "kind": kind}
    if kind in OLO_LEARNERS and pk.broadcast:
        raise ValueError(f"predictor {pk} is defined for the expert problem only")
    if kind == "thm1":
        learner = MsMwC.thm1(d, T, cap=spec.pop("cap", pk.rate_cap))
        info["bounds"] = ["thm1"]
    elif kind == "fixed":
        learner = MsMwC.fixed(d, T, spec.pop("rate"))
    elif kind == "hedge":
        learner = Hedge(d, spec.pop("eta"))
    elif kind == "kl":
        prior = np.asarray(spec.pop("prior", np.full(d, 1.0 / d)), float)
        learner = build_kl(prior, T)
        info.update(bounds=["thm4"], prior=prior.tolist())
    elif kind == "multiscale":
        c = spec.pop("ranges", None)
        if c is None and env is not None:
            c = env.meta.get("ranges")
        if c is None:
            raise ValueError("multiscale learner needs ranges")
        learner = build_multiscale(np.asarray(c, float), T)
        info.update(bounds=["thm5"], ranges=list(map(float, c)))
    elif kind == "switching":
        learner = build_switching(d, T)
        info["bounds"] = ["thm6"]
    elif kind == "unknown_range":
        B0 = float(spec.pop("B0", 1.0))
        prior = np.asarray(spec.pop("prior", np.full(d, 1.0 / d)), float)
        learner = RestartWrapper(lambda b, tr: build_unknown_range(b, T, prior), B0, T, norm="inf")
        info.update(bounds=["thm7"], B0=B0, prior=prior.tolist())
    elif kind in ("ons", "gd", "adagrad", "metagrad", "union3"):
        D = float(spec.pop("D", 1.0))
        kw = {}
        if kind in ("adagrad", "union3") and "max_experts" in spec:
            kw["max_experts"] = spec.pop("max_experts")
        learner = olo_suites.BUILDERS[kind](D, d, T, **kw)
        ids = {"ons": ["thm8"], "gd": ["thm9"], "adagrad": ["thm10"], "metagrad": ["thm11"],
               "union3": ["thm8", "thm9", "thm10"]}[kind]
        info.update(family="olo", bounds=ids, D=D)
    elif kind == "onsul":
        D = float(spec.pop("D", 1.0))
        B0 = float(spec.pop("B0", 1.0))

        def gen(b, tr):
            return olo_suites.build_onsul(D, b, T, d, lambda: tr.B)

        learner = RestartWrapper(gen, B0, T, norm="2")
        info.update(family="olo", bounds=["thm8"], D=D, B0=B0)
    elif kind == "onsuld":
        B0 = float(spec.pop("B0", 1.0))

        def gen(D, b, tr):
            return olo_suites.build_onsuld(D, b, T, d, lambda: tr.B)

        learner = DoublingWrapper(gen, B0, T)
        info.update(family="olo", bounds=[], D=None, B0=B0)
    else:
        raise ValueError(f"unknown learner kind {kind!r}")
    if spec:
        raise ValueError(f"unknown learner parameters for {kind}: {sorted(spec)}")
    return learner, info


# ---------------------------------------------------------------------------
# driver


class LearnerRuntimeError(RuntimeError):
    """A learner failed mid-run; carries the round index."""

    def __init__(self, t, exc):
        super().__init__(f"round {t}: {type(exc).__name__}: {exc}")
        self.t = t


@dataclass
class RunResult:
    trace: RegretTrace
    comparators: dict
    reports: list
    events: list
    info: dict
    env_meta: dict
    learner: object = None

    def final_regrets(self):
        from .core import regret

        return {k: regret(self.trace, u) for k, u in self.comparators.items()}


def best_in_ball(losses, radius):
    g = np.asarray(losses, float).sum(axis=0)
    n = np.linalg.norm(g)
    return np.zeros_like(g) if n == 0 else -radius * g / n


def _comparators(info, env, trace, d):
    if info["family"] == "expert":
        return {f"e{i + 1}": np.eye(d)[i] for i in range(d)}
    radius = info.get("D") or 1.0
    return {"u_star": best_in_ball(trace.losses, radius)}


def _bound_inputs(bid, info, env, c):
    if bid in ("thm4", "thm7"):
        out = {"prior": info.get("prior")}
        if bid == "thm7":
            out["B"] = None
        return out
    if bid == "thm5":
        return {"ranges": info["ranges"]}
    return {}


def _reports_at(c, info, env, trace, comparators, audit):
    out = []
    losses = trace.losses[:c]
    targets = trace.hints[:c]
    for bid in info["bounds"]:
        if bid == "thm6":
            parts = env.meta.get("partition")
            if not parts:
                continue
            segs = [(a, min(b, c)) for a, b in parts if a <= c]
            us = [np.eye(trace.d)[i] for i in env.meta["best"][: len(segs)]]
            realized = sum(
                float(np.sum(trace.learner_losses()[a - 1 : b]) - np.sum(trace.losses[a - 1 : b] @ u))
                for (a, b), u in zip(segs, us)
            )
            rep = bounds.theorem_bound(bid, losses, targets, None, audit=audit, realized=realized,
                                       partition=segs, comparators=us)
            out.append({"checkpoint": c, "comparator": "planted_switching", **rep.to_dict()})
            continue
        for label, u in comparators.items():
            inputs = _bound_inputs(bid, info, env, c)
            if bid == "thm7":
                B0 = info["B0"]
                inputs["B"] = max(B0, float(np.max(np.abs(losses - targets))))
            if bid == "thm11":
                inputs.update(plays=trace.decisions[:c], D=info["D"])
            realized = float(np.sum(trace.learner_losses()[:c]) - np.sum(losses @ u))
            rep = bounds.theorem_bound(bid, losses, targets, u, audit=audit, realized=realized, **inputs)
            out.append({"checkpoint": c, "comparator": label, **rep.to_dict()})
    return out


def run(env_spec, learner_spec, predictor="zero", *, checkpoints=None, audit=None):
    """Drive the two-phase protocol for T rounds and evaluate bounds at checkpoints."""
    env = build_environment(env_spec)
    d, T = env_spec.d, env_spec.T
    learner, info = build_learner(learner_spec, d, T, predictor, env)
    hints = HintStream(predictor, d)
    trace = RegretTrace(d, T)
    n_events = 0
    events = []
    for t in range(1, T + 1):
        pre = hints.pre_hint()
        loss = env.losses[t - 1]
        try:
            w = learner.begin_round(pre)
            target = hints.target(pre, w, loss)
            learner.end_round(loss, target)
        except Exception as exc:
            raise LearnerRuntimeError(t, exc) from exc
        trace.append(w, loss, target)
        hints.observe(loss)
        evs = getattr(learner, "events", None)
        if evs is not None and len(evs) > n_events:
            for ev in evs[n_events:]:
                trace.annotate(ev[0], ev[1])
                events.append({"t": int(ev[0]), "event": ev[1], "value": float(ev[2])})
            n_events = len(evs)
    comps = _comparators(info, env, trace, d)
    cps = sorted({max(1, T // 4), max(1, T // 2), T} if checkpoints is None else set(checkpoints))
    reports = []
    for c in cps:
        reports.extend(_reports_at(c, info, env, trace, comps, audit))
    return RunResult(trace, comps, reports, events, info, env.meta, learner)
