"""Weighted negative-entropy mirror-descent step over a constrained simplex.

Solves  argmin_{w in region} <w, x> + sum_i (1/eta_i) f_KL(w_i, w'_i).

The KKT conditions give w_i(lam) = max(b_i, w'_i exp(eta_i (lam - x_i))) on the
support, so the whole problem reduces to finding the scalar lam at which the
weights sum to one. That root search runs in the kernel backend.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import SimplexRegion

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveInfo:
    lam: float
    iterations: int
    converged: bool
    bracket: tuple


@dataclass
class EntropySolveRequest:
    anchor: np.ndarray
    cost: np.ndarray
    rates: np.ndarray
    region: SimplexRegion | None = None

    def solve(self, **kw):
        return solve(self.anchor, self.cost, self.rates, self.region, **kw)


def _broadcast_rates(rates, d):
    rates = np.asarray(rates, dtype=float)
    if rates.ndim == 0:
        return np.full(d, float(rates))
    if rates.shape != (d,):
        raise ValueError(f"rates have shape {rates.shape}, expected ({d},)")
    return rates


def solve(anchor, cost, rates, region=None, *, max_iter=200, tol_lam=1e-14, info=False):
    """Minimizer of <w, cost> + D_psi(w, anchor) over the region.

    Anchor mass outside the region's support is dropped and the rest
    renormalized (the limit of the entropy projection). Returns the weights,
    or ``(weights, SolveInfo)`` when ``info`` is set.
    """
    anchor = np.asarray(anchor, dtype=float)
    cost = np.asarray(cost, dtype=float)
    d = anchor.shape[0]
    if anchor.ndim != 1 or cost.shape != (d,):
        raise ValueError("anchor and cost must be vectors of equal length")
    rates = _broadcast_rates(rates, d)
    if region is None:
        region = SimplexRegion.full(d)
    elif region.dim != d:
        raise ValueError(f"region dimension {region.dim} != {d}")

    sup = region.support
    full = bool(sup.all())
    a = anchor if full else anchor[sup]
    x = cost if full else cost[sup]
    eta = rates if full else rates[sup]
    b = region.lower_bounds if full else region.lower_bounds[sup]
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite cost; cannot bracket the multiplier")
    if not (np.all(eta > 0) and np.all(np.isfinite(eta))):
        raise ValueError("rates must be positive and finite on the support")
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise ValueError("anchor must be strictly positive on the support")
    mass = a.sum()
    if abs(mass - 1.0) > 1e-12:
        a = a / mass

    w_sup, lam, it, ok, lo, hi = kernels.entropy_solve(
        np.ascontiguousarray(a),
        np.ascontiguousarray(x),
        np.ascontiguousarray(eta),
        np.ascontiguousarray(b),
        max_iter,
        tol_lam,
    )
    if not ok:
        log.debug("entropy solve hit the iteration cap (lam=%g); unclipped mass renormalized", lam)
    if full:
        w = np.asarray(w_sup)
    else:
        w = np.zeros(d)
        w[sup] = w_sup
    if info:
        return w, SolveInfo(float(lam), int(it), bool(ok), (float(lo), float(hi)))
    return w


def f_kl(a, b):
    """Elementwise a ln(a/b) - a + b with f(0, b) = b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0) / b) - a + b, b)
    return out


def bregman(u, w, rates):
    """D_psi(u, w) = sum_i (1/eta_i) f_KL(u_i, w_i).

    Coordinates where both u and w vanish contribute nothing (off-support).
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    rates = _broadcast_rates(rates, u.shape[0])
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    live = w != 0
    if np.any(w[live] < 0) or np.any(u[~live] > 0):
        raise ValueError("w must be positive wherever u has mass")
    return float(np.sum(f_kl(u[live], w[live]) / rates[live]))


def objective(w, anchor, cost, rates):
    return float(np.dot(w, cost)) + bregman(w, anchor, rates)
