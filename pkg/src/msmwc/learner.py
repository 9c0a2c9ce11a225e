"""MsMwC: optimistic mirror descent with weighted entropy and a second-order correction.

Each round plays
    w_t  = argmin_{w in region} <w, m_t> + D(w, w'_t)
and after seeing the loss updates the anchor
    w'_{t+1} = argmin_{w in region} <w, l_t + a_t> + D(w, w'_t),
    a_{t,i} = 32 eta_{t,i} (l_{t,i} - m_{t,i})^2,
where D is the Bregman divergence of sum_i (1/eta_{t,i}) w_i ln w_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import RoundProtocol, SimplexRegion, as_vector

DEFAULT_CAP = 1.0 / 64
RECENTERED_CAP = 1.0 / 128


@dataclass
class RateSchedule:
    """Per-coordinate learning rates.

    ``fixed``: constant rates. ``adaptive``: eta_{t,i} = min(sqrt(ln(dT) / S_{t,i}), cap)
    with S_{t,i} the sum of squared errors before round t (cap when S is 0).
    """

    kind: str = "adaptive"
    rates: np.ndarray | None = None
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        if self.kind not in ("fixed", "adaptive"):
            raise ValueError(f"unknown rate schedule {self.kind!r}")
        if not self.cap > 0:
            raise ValueError("cap must be positive")
        if self.kind == "fixed":
            if self.rates is None:
                raise ValueError("fixed schedule needs rates")
            self.rates = np.asarray(self.rates, dtype=float)
            if np.any(self.rates <= 0) or not np.all(np.isfinite(self.rates)):
                raise ValueError("rates must be positive and finite")

    @classmethod
    def fixed(cls, rates):
        return cls("fixed", rates=rates)

    @classmethod
    def adaptive(cls, cap=DEFAULT_CAP):
        return cls("adaptive", cap=cap)

    def rates_at(self, error_sq_history, log_dt):
        if self.kind == "fixed":
            return np.broadcast_to(self.rates, error_sq_history.shape).astype(float)
        out = np.full(error_sq_history.shape, self.cap)
        pos = error_sq_history > 0
        out[pos] = np.minimum(np.sqrt(log_dt / error_sq_history[pos]), self.cap)
        return out


class MsMwC(RoundProtocol):
    """Single-layer learner over d experts with horizon T.

    ``region`` is a SimplexRegion or a callable ``t -> SimplexRegion``;
    ``prior`` is w'_1 (uniform over the support by default). With
    ``record=True`` the per-round w'_t, w_t, eta_t, losses and correction
    targets are kept for bound audits.
    """

    def __init__(self, d, T, *, schedule=None, region=None, prior=None, record=False):
        d, T = int(d), int(T)
        if d < 1 or T < 1:
            raise ValueError("d and T must be positive")
        if d * T < 3:
            raise ValueError("need d*T >= 3 so that ln(dT) > 1")
        self.d, self.T = d, T
        self.log_dt = math.log(d * T)
        self.schedule = schedule if schedule is not None else RateSchedule.adaptive()
        if self.schedule.kind == "fixed" and np.ndim(self.schedule.rates) == 1:
            if self.schedule.rates.shape != (d,):
                raise ValueError("fixed rates must have length d")
        if region is None:
            region = SimplexRegion.full(d)
        self._region_fn = region if callable(region) else None
        self._region = None if callable(region) else region
        first = self._region if self._region is not None else self._region_fn(1)
        if first.dim != d:
            raise ValueError("region dimension mismatch")

        if prior is None:
            prior = first.support / first.support.sum()
        prior = as_vector(prior, d, "prior").copy()
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise ValueError("prior must be a probability vector")
        prior[~first.support] = 0.0
        if np.any(prior[first.support] <= 0):
            raise ValueError("prior must be positive on the region support")
        self.w_prime = prior / prior.sum()
        self.w_play = None
        self.error_sq_history = np.zeros(d)
        self.rates = None
        self.t = 1
        self._hint = None
        self._cached_region = None
        self.condition_violations = 0
        self.unconverged_solves = 0
        self.record = record
        if record:
            self.history = {
                k: np.zeros((T, d)) for k in ("w_prime", "w_play", "rates", "loss", "target")
            }

    # region handling -------------------------------------------------
    def region_at(self, t):
        return self._region if self._region is not None else self._region_fn(t)

    def _prepare(self, region):
        if self._cached_region is not region:
            sup = region.support
            self._cached_region = region
            self._full = bool(sup.all())
            self._sup = sup
            self._b = np.ascontiguousarray(region.lower_bounds[sup])
        return self._full, self._sup, self._b

    def _solve(self, cost, region):
        full, sup, b = self._prepare(region)
        eta = self.rates
        a = self.w_prime
        if full:
            w, _, _, ok, _, _ = kernels.entropy_solve(a, cost, eta, b)
            w = np.asarray(w)
        else:
            a_s = a[sup]
            if np.any(a_s <= 0):
                raise ValueError("anchor has no mass on part of the region support")
            a_s = a_s / a_s.sum()
            w_s, _, _, ok, _, _ = kernels.entropy_solve(
                np.ascontiguousarray(a_s),
                np.ascontiguousarray(cost[sup]),
                np.ascontiguousarray(eta[sup]),
                b,
            )
            w = np.zeros(self.d)
            w[sup] = w_s
        if not ok:
            self.unconverged_solves += 1
        return w

    # protocol --------------------------------------------------------
    def begin_round(self, hint=None):
        self._enter_begin()
        if self.t > self.T:
            self._phase = "begin"
            raise ValueError(f"horizon T={self.T} exhausted")
        if hint is None:
            hint = np.zeros(self.d)
        else:
            hint = np.asarray(hint, dtype=float)
            if hint.shape != (self.d,):
                self._phase = "begin"
                raise ValueError(f"hint has shape {hint.shape}, expected ({self.d},)")
        self._hint = hint
        self._round_region = self.region_at(self.t)
        self.rates = self.schedule.rates_at(self.error_sq_history, self.log_dt)
        self.w_play = self._solve(np.ascontiguousarray(hint), self._round_region)
        return self.w_play

    def end_round(self, loss, correction_target=None):
        self._enter_end()
        loss = np.asarray(loss, dtype=float)
        if loss.shape != (self.d,) or not np.all(np.isfinite(loss)):
            self._phase = "end"
            raise ValueError(f"round {self.t}: loss must be a finite vector of length {self.d}")
        target = self._hint if correction_target is None else np.asarray(correction_target, float)
        err = loss - target
        eta = self.rates
        if np.any(32.0 * eta * np.abs(err) > 1.0 + 1e-12):
            self.condition_violations += 1
        if self.record:
            h, i = self.history, self.t - 1
            h["w_prime"][i] = self.w_prime
            h["w_play"][i] = self.w_play
            h["rates"][i] = eta
            h["loss"][i] = loss
            h["target"][i] = target
        corr = 32.0 * eta * err * err
        self.w_prime = self._solve(np.ascontiguousarray(loss + corr), self._round_region)
        self.error_sq_history += err * err
        self.t += 1

    # constructors ----------------------------------------------------
    @classmethod
    def thm1(cls, d, T, cap=DEFAULT_CAP, **kw):
        """Adaptive rates on the truncated simplex {w_i >= 1/(dT)}, uniform start."""
        return cls(
            d,
            T,
            schedule=RateSchedule.adaptive(cap),
            region=SimplexRegion.truncated(d, 1.0 / (d * T)),
            **kw,
        )

    @classmethod
    def fixed(cls, d, T, rate, *, region=None, prior=None, **kw):
        rates = np.broadcast_to(np.asarray(rate, dtype=float), (d,)).copy()
        return cls(d, T, schedule=RateSchedule.fixed(rates), region=region, prior=prior, **kw)
