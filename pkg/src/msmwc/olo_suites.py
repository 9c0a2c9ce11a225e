"""Expert pools for online linear optimization over a Euclidean ball of radius D.

Each suite is built from *parts*: master rates, one batched bank and labels.
``build_*`` wraps the parts in an ExpertPool; callers that want several
masters over the same bases (the union comparison) wrap the bank in a
``SharedBank`` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .master import ExpertPool
from .olo_base import OnlineNewtonStep, MetaGradBase, OptimisticAdaGrad, OptimisticGD, ZeroLearner


def _clog2(x):
    return int(math.ceil(math.log2(x) - 1e-12))


@dataclass
class SuiteParts:
    etas: np.ndarray
    bank: object
    labels: list

    def pool(self, **kw):
        return ExpertPool(self.etas, [self.bank], self.labels, **kw)


def _check(D, d, T):
    if not D > 0:
        raise ValueError("D must be positive")
    if d < 1 or T < 2:
        raise ValueError("need d >= 1 and T >= 2")


def _fallback(d):
    return SuiteParts(np.array([1.0 / 64]), ZeroLearner(d), ["zero"])


def _assert_master_condition(etas, radii, what):
    # 32 eta_k |<w^k, l - m>| <= 32 eta_k radius_k when ||l - m|| <= 1
    if np.any(32 * etas * radii > 1 + 1e-12):
        raise AssertionError(f"{what}: 32 eta_k * radius_k > 1 for some expert")


def ons_parts(D, d, T, *, range_hint=None):
    _check(D, d, T)
    if D < 1.0 / (d * T):
        return _fallback(d)
    dks = range(-_clog2(d * T), _clog2(D) + 1)
    grid = [(dk, sk) for dk in dks for sk in range(1, _clog2(T) + 1)]
    etas = np.array([1.0 / (64 * 2.0 ** (dk + sk)) for dk, sk in grid])
    radii = np.array([min(2.0**dk, D) for dk, _ in grid])
    _assert_master_condition(etas, radii, "ons")
    bank = OnlineNewtonStep(d, 3 * etas, radii, range_hint=range_hint)
    return SuiteParts(etas, bank, [f"ons(d={dk},s={sk})" for dk, sk in grid])


def gd_parts(D, d, T):
    _check(D, d, T)
    if D < 1.0 / (d * T):
        return _fallback(d)
    grid = [(dk, sk) for dk in range(-_clog2(T), _clog2(D) + 1) for sk in range(1, _clog2(T) + 1)]
    etas = np.array([1.0 / (32 * 2.0 ** (dk + sk)) for dk, sk in grid])
    radii = np.array([min(2.0**dk, D) for dk, _ in grid])
    _assert_master_condition(etas, radii, "gd")
    inner = np.array([4.0**dk for dk, _ in grid]) * etas
    bank = OptimisticGD(d, inner, radii)
    return SuiteParts(etas, bank, [f"gd(d={dk},s={sk})" for dk, sk in grid])


def adagrad_l_axis(D, T, max_per_axis=None):
    ls = list(range(-_clog2(T), _clog2(2 * D * D * T) + 1))
    if max_per_axis is None or len(ls) <= max_per_axis:
        return ls
    n = max(2, int(max_per_axis))
    idx = np.unique(np.round(np.linspace(0, len(ls) - 1, n)).astype(int))
    return [ls[i] for i in idx]


def adagrad_parts(D, d, T, *, max_experts=None):
    """Triple grid over (d_k, t_k, l_k); ``max_experts`` thins the l_k axis evenly in exponent."""
    _check(D, d, T)
    if D < 1.0 / (d * T):
        return _fallback(d)
    dks = list(range(-_clog2(T), _clog2(D) + 1))
    tks = list(range(1, _clog2(d * T) + 1))
    per_l = None if max_experts is None else max_experts // (len(dks) * len(tks))
    lks = adagrad_l_axis(D, T, per_l)
    grid = [(dk, tk, lk) for dk in dks for tk in tks for lk in lks]
    etas = np.array([1.0 / (64 * 2.0 ** (dk + tk)) for dk, tk, _ in grid])
    radii = np.array([min(2.0**dk, D) for dk, _, _ in grid])
    eta_prime = 2 * etas
    if np.any(64 * eta_prime * radii > 1 + 1e-12):
        raise AssertionError("adagrad: 64 eta' * radius > 1 for some expert")
    _assert_master_condition(etas, radii, "adagrad")
    eta_reg = np.array([2.0 ** (lk + 1) for _, _, lk in grid]) * etas
    bank = OptimisticAdaGrad(d, eta_reg, eta_prime, radii)
    return SuiteParts(etas, bank, [f"ag(d={dk},t={tk},l={lk})" for dk, tk, lk in grid])


def metagrad_parts(D, d, T):
    _check(D, d, T)
    ks = range(1, _clog2(2 * D * T) + 1)
    etas = np.array([1.0 / (64 * D * 2.0**k) for k in ks])
    if np.any(64 * etas * D > 1 + 1e-12):
        raise AssertionError("metagrad: 64 eta_k D > 1")
    bank = MetaGradBase(d, 4 * etas, np.full(etas.size, float(D)))
    return SuiteParts(etas, bank, [f"mg(k={k})" for k in ks])


def onsul_rates(D, B0, T):
    if not B0 > 0:
        raise ValueError("B0 must be positive")
    n = _clog2(T * T)
    return np.array([1.0 / (192 * D * B0 * 2.0**k) for k in range(1, n + 1)])


def onsul_parts(D, B0, T, d, range_hint):
    _check(D, d, T)
    etas = onsul_rates(D, B0, T)
    bank = OnlineNewtonStep(d, 3 * etas, np.full(etas.size, float(D)), range_hint=range_hint)
    return SuiteParts(etas, bank, [f"onsul(k={k})" for k in range(1, etas.size + 1)])


def onsul_active(D, B0, T):
    etas = onsul_rates(D, B0, T)

    def rule(b_prev):
        return etas <= 1.0 / (192.0 * D * b_prev) * (1 + 1e-12)

    return rule


# ---------------------------------------------------------------------------
# pools


def build_ons(D, d, T, *, record=False):
    return ons_parts(D, d, T).pool(record=record, T=T)


def build_gd(D, d, T, *, record=False):
    return gd_parts(D, d, T).pool(record=record, T=T)


def build_adagrad(D, d, T, *, max_experts=None, record=False):
    return adagrad_parts(D, d, T, max_experts=max_experts).pool(record=record, T=T)


def build_metagrad(D, d, T, *, record=False):
    return metagrad_parts(D, d, T).pool(recentered=True, record=record, T=T)


def build_union3(D, d, T, *, max_experts=None, record=False):
    parts = [ons_parts(D, d, T), gd_parts(D, d, T), adagrad_parts(D, d, T, max_experts=max_experts)]
    etas = np.concatenate([p.etas for p in parts])
    labels = [lab for p in parts for lab in p.labels]
    return ExpertPool(etas, [p.bank for p in parts], labels, record=record, T=T)


def build_onsul(D, B0, T, d, range_hint, *, record=False):
    """Pool and active-set rule; the ONS range hints read z_t = B_{t-1} from ``range_hint``."""
    parts = onsul_parts(D, B0, T, d, range_hint)
    return parts.pool(record=record, T=T), onsul_active(D, B0, T)


def build_onsuld(D, B0, T, d, range_hint, *, record=False):
    """Same generator with the region radius D chosen by the doubling wrapper."""
    return build_onsul(D, B0, T, d, range_hint, record=record)


BUILDERS = {
    "ons": build_ons,
    "gd": build_gd,
    "adagrad": build_adagrad,
    "metagrad": build_metagrad,
    "union3": build_union3,
}
