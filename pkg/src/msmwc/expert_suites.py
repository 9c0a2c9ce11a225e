"""Expert-problem pools: KL-prior, multi-scale, switching and unknown-range suites.

Every base is a fixed-rate MsMwC; the master's rate for base k is eta_k and the
base runs internally at 2 eta_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SimplexRegion
from .learner import MsMwC
from .master import ExpertPool, SingleBank


def _ceil_log2(x):
    return int(math.ceil(math.log2(x) - 1e-12))


def _check_T(T):
    if T < 2:
        raise ValueError("suites need T >= 2")


def _prior(prior, d=None):
    if prior is None:
        return np.full(d, 1.0 / d)
    prior = np.asarray(prior, dtype=float)
    if prior.ndim != 1 or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError("prior must be a probability vector")
    return prior / prior.sum()


@dataclass(frozen=True)
class SuiteSpec:
    kind: str
    d: int
    T: int
    prior: tuple | None = None
    ranges: tuple | None = None
    B0: float = 1.0
    params: dict = field(default_factory=dict)


def kl_rates(T):
    _check_T(T)
    return np.array([1.0 / (32 * 2**k) for k in range(1, _ceil_log2(T) + 1)])


def build_kl(prior, T, *, record=False):
    """ceil(log2 T) full-simplex bases started at the prior."""
    prior = _prior(prior)
    d = prior.size
    etas = kl_rates(T)
    region = SimplexRegion.full(d)
    if np.any(prior == 0):
        region = SimplexRegion.restricted(d, prior > 0)
    banks = [SingleBank(MsMwC.fixed(d, T, 2 * e, region=region, prior=prior, record=record)) for e in etas]
    labels = [f"kl(k={k})" for k in range(1, etas.size + 1)]
    return ExpertPool(etas, banks, labels, record=record, T=T)


def multiscale_grid(c, T):
    """The set S of scales k and, for each, the support Z(k) = {i : c_i <= 2^(k-2)}."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or np.any(c <= 0):
        raise ValueError("ranges must be positive")
    _check_T(T)
    ks = set()
    for ci in c:
        lo = math.ceil(math.log2(ci) - 1e-12) + 2
        hi = math.floor(math.log2(ci * math.sqrt(T)) + 1e-12) + 2
        ks.update(range(lo, hi + 1))
    ks = sorted(ks)
    supports = [c <= 2.0 ** (k - 2) for k in ks]
    return ks, supports


def build_multiscale(c, T, *, record=False):
    c = np.asarray(c, dtype=float)
    d = c.size
    ks, supports = multiscale_grid(c, T)
    etas, banks, labels = [], [], []
    for k, sup in zip(ks, supports):
        eta = 1.0 / (32 * 2.0**k)
        if np.any(64 * eta * c[sup] > 1 + 1e-12):
            raise AssertionError(f"scale {k}: 32*(2 eta_k)*c_i > 1 on its support")
        region = SimplexRegion.restricted(d, sup)
        banks.append(SingleBank(MsMwC.fixed(d, T, 2 * eta, region=region, record=record)))
        etas.append(eta)
        labels.append(f"ms(k={k})")
    return ExpertPool(etas, banks, labels, hint_bounds=c, record=record, T=T)


def build_switching(d, T, *, record=False):
    _check_T(T)
    etas = kl_rates(T)
    region = SimplexRegion.truncated(d, 1.0 / (d * T))
    banks = [SingleBank(MsMwC.fixed(d, T, 2 * e, region=region, record=record)) for e in etas]
    labels = [f"switch(k={k})" for k in range(1, etas.size + 1)]
    return ExpertPool(etas, banks, labels, lower_bound=1.0 / T, record=record, T=T)


def unknown_range_rates(B0, T):
    if not B0 > 0:
        raise ValueError("B0 must be positive")
    _check_T(T)
    n = _ceil_log2(2 * T * T)
    return np.array([1.0 / (32 * B0 * 2**k) for k in range(1, n + 1)])


def unknown_range_active(B0, T):
    """Predicate B_{t-1} -> active mask, {k : 1/(32 B0 2^k) <= 1/(64 B_{t-1})}."""
    etas = unknown_range_rates(B0, T)

    def rule(b_prev):
        return etas <= 1.0 / (64.0 * b_prev) * (1 + 1e-12)

    return rule


def build_unknown_range(B0, T, prior, *, record=False):
    prior = _prior(prior)
    d = prior.size
    etas = unknown_range_rates(B0, T)
    region = SimplexRegion.full(d)
    banks = [SingleBank(MsMwC.fixed(d, T, 2 * e, region=region, prior=prior, record=record)) for e in etas]
    labels = [f"ur(k={k})" for k in range(1, etas.size + 1)]
    return ExpertPool(etas, banks, labels, record=record, T=T), unknown_range_active(B0, T)


def build(spec: SuiteSpec, *, record=False):
    if spec.kind == "kl":
        return build_kl(spec.prior if spec.prior is not None else np.full(spec.d, 1 / spec.d), spec.T, record=record)
    if spec.kind == "multiscale":
        return build_multiscale(spec.ranges, spec.T, record=record)
    if spec.kind == "switching":
        return build_switching(spec.d, spec.T, record=record)
    if spec.kind == "unknown_range":
        prior = spec.prior if spec.prior is not None else np.full(spec.d, 1 / spec.d)
        return build_unknown_range(spec.B0, spec.T, prior, record=record)
    raise ValueError(f"unknown suite kind {spec.kind!r}")
