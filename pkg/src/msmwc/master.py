"""Master aggregator over a pool of (learning rate, base learner) experts.

The master runs fixed-rate weighted-entropy mirror descent over the experts,
with cost h_{t,k} = <w^k_t, m_t> at play time and g_t + b_t at update time,
b_{t,k} = 32 eta_k e_{t,k}^2. The error e is g - h (plain) or
<w^k_t - w_t, l_t - m_t> (recentered).

Base learners are grouped into *banks*: objects holding ``n_experts``
learners that return their decisions stacked as a (n_experts, d) array.
Single learners are wrapped by :class:`SingleBank`; the OLO learners in
``olo_base`` are natively batched.
"""

from __future__ import annotations

import logging

import numpy as np

from . import kernels
from .core import ProtocolError, RoundProtocol, SimplexRegion

log = logging.getLogger(__name__)


class BaseLearnerError(RuntimeError):
    """A base learner failed; the message carries its label."""


class SingleBank:
    """Adapter exposing one RoundProtocol learner as a bank of size 1."""

    n_experts = 1

    def __init__(self, learner):
        self.learner = learner
        self.d = learner.d
        self._last = np.zeros((1, self.d))

    def begin_round(self, hint, active=None):
        if active is None or active[0]:
            self._last = np.asarray(self.learner.begin_round(hint))[None, :]
        return self._last

    def end_round(self, loss, target, center=None, active=None):
        if active is None or active[0]:
            self.learner.end_round(loss, correction_target=target)


class SharedBank:
    """Steps an underlying bank once per round for several masters.

    Bases in the OLO suites never read master state (except the recentered
    suite), so masters over overlapping pools can share their computation.
    Every view must be driven with the same hints and losses.
    """

    def __init__(self, bank):
        self.bank = bank
        self.n_experts = bank.n_experts
        self.d = bank.d
        self._views = 0
        self._begun = -1
        self._ended = -1
        self._decisions = None
        self._hint = None
        self._loss = None

    def view(self):
        self._views += 1
        return _BankView(self, self._views - 1)


class _BankView:
    def __init__(self, shared, idx):
        self.shared = shared
        self.idx = idx
        self.n_experts = shared.n_experts
        self.d = shared.d
        self.round = 0

    def begin_round(self, hint, active=None):
        s = self.shared
        if active is not None and not np.all(active):
            raise ValueError("shared banks cannot freeze experts")
        if s._begun < self.round:
            s._decisions = s.bank.begin_round(hint)
            s._hint = np.array(hint, copy=True)
            s._begun = self.round
        elif not np.array_equal(hint, s._hint):
            raise ValueError("shared bank views received different hints")
        return s._decisions

    def end_round(self, loss, target, center=None, active=None):
        s = self.shared
        if center is not None:
            raise ValueError("shared banks cannot take per-master centers")
        if s._ended < self.round:
            s.bank.end_round(loss, target)
            s._loss = np.array(loss, copy=True)
            s._ended = self.round
        elif not np.array_equal(loss, s._loss):
            raise ValueError("shared bank views received different losses")
        self.round += 1


class ExpertPool(RoundProtocol):
    """Master state machine.

    Parameters
    ----------
    etas : per-expert learning rates eta_k (also the master's fixed rates).
    banks : list of banks whose sizes add up to len(etas).
    labels : per-expert labels (default ``expert<k>``).
    lower_bound : admissible set {p_k >= lower_bound} (0 for the full simplex).
    recentered : use the recentered correction error and feed the master's
        play back to the bases as their center.
    hint_bounds : optional per-coordinate clamp |m_i| <= c_i applied to hints.
    """

    def __init__(
        self,
        etas,
        banks,
        labels=None,
        *,
        lower_bound=0.0,
        recentered=False,
        hint_bounds=None,
        record=False,
        T=None,
    ):
        self.etas = np.asarray(etas, dtype=float)
        if self.etas.ndim != 1 or self.etas.size == 0 or np.any(self.etas <= 0):
            raise ValueError("etas must be a nonempty vector of positive rates")
        self.banks = list(banks)
        sizes = [b.n_experts for b in self.banks]
        if sum(sizes) != self.etas.size:
            raise ValueError(f"banks hold {sum(sizes)} experts but {self.etas.size} rates given")
        dims = {b.d for b in self.banks}
        if len(dims) != 1:
            raise ValueError("all banks must share the decision dimension")
        self.d = dims.pop()
        self.K = self.etas.size
        bounds = np.cumsum([0] + sizes)
        self._slices = [slice(bounds[i], bounds[i + 1]) for i in range(len(sizes))]
        self.labels = list(labels) if labels is not None else [f"expert{k}" for k in range(self.K)]
        if len(self.labels) != self.K:
            raise ValueError("labels length mismatch")
        self.lower_bound = float(lower_bound)
        if self.lower_bound * self.K > 1 + 1e-12:
            raise ValueError("lower bound makes the admissible set empty")
        self.recentered = bool(recentered)
        self.hint_bounds = None if hint_bounds is None else np.asarray(hint_bounds, float)
        self.hint_clamps = 0

        sq = self.etas**2
        self.p_prime = sq / sq.sum()
        self.active = np.ones(self.K, dtype=bool)
        self._region = SimplexRegion(self.K, self.active, np.full(self.K, self.lower_bound))
        self.t = 1
        self.p = None
        self.decisions = None
        self.w = None
        self._hint = None
        self.record = record
        if record:
            if T is None:
                raise ValueError("record=True needs the horizon T")
            self.history = {
                "p": np.zeros((T, self.K)),
                "base": np.zeros((T, self.K, self.d)),
                "loss": np.zeros((T, self.d)),
                "target": np.zeros((T, self.d)),
                "play": np.zeros((T, self.d)),
            }

    # admissible set -------------------------------------------------------
    def set_active(self, active):
        active = np.asarray(active, dtype=bool)
        if active.shape != (self.K,):
            raise ValueError("active mask has wrong length")
        if not active.any():
            raise ValueError("active set is empty")
        if np.any(active & ~self.active):
            raise ValueError("active sets may only shrink; restoring an expert is not allowed")
        if np.array_equal(active, self.active):
            return
        self.active = active.copy()
        self._region = SimplexRegion(self.K, self.active, np.full(self.K, self.lower_bound))
        pp = np.where(self.active, self.p_prime, 0.0)
        if pp.sum() <= 0:
            pp = np.where(self.active, self.etas**2, 0.0)
        self.p_prime = pp / pp.sum()

    def _solve(self, cost):
        sup = self.active
        if sup.all():
            p, _, _, ok, _, _ = kernels.entropy_solve(
                self.p_prime, np.ascontiguousarray(cost), self.etas, self._region.lower_bounds
            )
            return np.asarray(p)
        p = np.zeros(self.K)
        p_s, _, _, ok, _, _ = kernels.entropy_solve(
            np.ascontiguousarray(self.p_prime[sup]),
            np.ascontiguousarray(cost[sup]),
            np.ascontiguousarray(self.etas[sup]),
            np.ascontiguousarray(self._region.lower_bounds[sup]),
        )
        p[sup] = p_s
        return p

    def _clamp(self, m):
        if self.hint_bounds is None:
            return m
        c = np.clip(m, -self.hint_bounds, self.hint_bounds)
        if not np.array_equal(c, m):
            self.hint_clamps += 1
            log.debug("hint clamped to per-expert ranges at round %d", self.t)
        return c

    # protocol -------------------------------------------------------------
    def begin_round(self, hint=None):
        self._enter_begin()
        hint = np.zeros(self.d) if hint is None else np.asarray(hint, dtype=float)
        hint = self._clamp(hint)
        self._hint = hint
        parts = []
        for bank, sl in zip(self.banks, self._slices):
            try:
                parts.append(bank.begin_round(hint, active=self.active[sl]))
            except ProtocolError:
                raise
            except Exception as exc:  # propagate with the base label
                raise BaseLearnerError(f"{self.labels[sl.start]}: {exc}") from exc
        self.decisions = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)
        h = self.decisions @ hint
        self.p = self._solve(h)
        self.w = self.p @ self.decisions
        return self.w

    def end_round(self, loss, correction_target=None, center=None):
        self._enter_end()
        loss = np.asarray(loss, dtype=float)
        if loss.shape != (self.d,) or not np.all(np.isfinite(loss)):
            raise ValueError(f"round {self.t}: loss must be a finite vector of length {self.d}")
        target = self._hint if correction_target is None else self._clamp(
            np.asarray(correction_target, dtype=float)
        )
        err_vec = loss - target
        g = self.decisions @ loss
        if self.recentered:
            e = (self.decisions - self.w) @ err_vec
        else:
            e = self.decisions @ err_vec
        b = 32.0 * self.etas * e * e
        if self.record:
            h, i = self.history, self.t - 1
            h["p"][i] = self.p
            h["base"][i] = self.decisions
            h["loss"][i] = loss
            h["target"][i] = target
            h["play"][i] = self.w
        base_center = self.w if self.recentered else None
        for bank, sl in zip(self.banks, self._slices):
            try:
                bank.end_round(loss, target, center=base_center, active=self.active[sl])
            except Exception as exc:
                raise BaseLearnerError(f"{self.labels[sl.start]}: {exc}") from exc
        self.p_prime = self._solve(g + b)
        self.t += 1

    # convenience ------------------------------------------------------------
    @property
    def n_experts(self):
        return self.K

    def expert_rates(self):
        return dict(zip(self.labels, self.etas))
