"""Adapting to an unknown loss range and an unknown comparator norm.

``RestartWrapper`` feeds truncated losses to an inner master and rebuilds it
when the observed range outgrows its initial guess by more than a factor T.
``DoublingWrapper`` wraps that again and restarts with a larger ball radius
when the cumulative loss norm says the current radius is too small.
"""

from __future__ import annotations

import math

import numpy as np

from .core import RoundProtocol


def _norm(v, kind):
    return float(np.max(np.abs(v))) if kind == "inf" else float(np.linalg.norm(v))


def truncate_loss(loss, hint, b_prev, b_cur):
    """m + (B_{t-1}/B_t)(l - m); the result is within B_{t-1} of m."""
    if not (b_prev > 0 and b_cur > 0):
        raise ValueError("ranges must be positive")
    if b_prev > b_cur * (1 + 1e-12):
        raise ValueError("B_prev must not exceed B_cur")
    loss = np.asarray(loss, dtype=float)
    hint = np.asarray(hint, dtype=float)
    if b_prev == b_cur:
        return loss.copy()
    return hint + (b_prev / b_cur) * (loss - hint)


class ScaleTracker:
    """Running maxima of ||l - m|| (floored at B0) and of ||l||_2, plus the sum of ||l||_2."""

    def __init__(self, B0, norm="inf"):
        if not B0 > 0:
            raise ValueError("B0 must be positive")
        if norm not in ("inf", "2"):
            raise ValueError("norm must be 'inf' or '2'")
        self.B0 = float(B0)
        self.norm = norm
        self.B = self.B0
        self.B_prev = self.B0
        self.G = 0.0
        self.loss_norm_sum = 0.0
        self.epoch_base = self.B0
        self.restarts = 0
        self.damage = 0.0

    def observe(self, loss, hint):
        self.B_prev = self.B
        self.B = max(self.B, _norm(np.asarray(loss) - np.asarray(hint), self.norm))
        ln = float(np.linalg.norm(loss))
        self.G = max(self.G, ln)
        self.loss_norm_sum += ln
        return self.B_prev, self.B


class RestartWrapper(RoundProtocol):
    """Truncated losses plus restarts on range blow-up.

    ``generator(b_tilde, tracker)`` returns ``(pool, rule)`` where ``rule`` maps
    B_{t-1} to the pool's active mask (``None`` for no restriction).
    """

    def __init__(self, generator, B0, T, *, norm="inf", tracker=None, t0=1):
        self.generator = generator
        self.T = int(T)
        self.tracker = tracker if tracker is not None else ScaleTracker(B0, norm)
        self.tracker.epoch_base = self.tracker.B
        self.d = None
        self.events = []
        self.t = t0
        self._build()

    def _build(self):
        self.pool, self.rule = self.generator(self.tracker.epoch_base, self.tracker)
        self.d = self.pool.d

    def begin_round(self, hint=None):
        self._enter_begin()
        if self.rule is not None:
            self.pool.set_active(self.rule(self.tracker.B))
        self._hint = np.zeros(self.d) if hint is None else np.asarray(hint, dtype=float)
        return self.pool.begin_round(self._hint)

    def end_round(self, loss, correction_target=None):
        self._enter_end()
        loss = np.asarray(loss, dtype=float)
        m = self._hint if correction_target is None else np.asarray(correction_target, dtype=float)
        tr = self.tracker
        b_prev, b_cur = tr.observe(loss, m)
        fed = truncate_loss(loss, m, b_prev, b_cur)
        tr.damage += _norm(loss - fed, tr.norm)
        self.pool.end_round(fed, correction_target=m)
        if b_cur / tr.epoch_base > self.T:
            tr.epoch_base = b_cur
            tr.restarts += 1
            self.events.append((self.t, "restart", b_cur))
            self._build()
        self.t += 1


class DoublingWrapper(RoundProtocol):
    """Radius doubling around a RestartWrapper (OLO, 2-norm ranges).

    ``generator(D, b_tilde, tracker)`` builds the inner pool for radius D.
    """

    def __init__(self, generator, B0, T):
        self.generator = generator
        self.T = int(T)
        self.D = 1.0
        self.tracker = ScaleTracker(B0, "2")
        self.events = []
        self.t = 1
        self.doublings = 0
        self._build()
        self.d = self.inner.d

    def _build(self):
        D = self.D
        self.inner = RestartWrapper(
            lambda b, tr: self.generator(D, b, tr), self.tracker.B, self.T, tracker=self.tracker, t0=self.t
        )

    def begin_round(self, hint=None):
        self._enter_begin()
        return self.inner.begin_round(hint)

    def end_round(self, loss, correction_target=None):
        self._enter_end()
        n_before = len(self.inner.events)
        self.inner.end_round(loss, correction_target)
        self.events.extend(self.inner.events[n_before:])
        tr = self.tracker
        self.t += 1
        if tr.G > 0:
            need = math.sqrt(tr.loss_norm_sum / tr.G)
            if self.D < need:
                self.D = 2.0 * need
                self.doublings += 1
                self.events.append((self.t - 1, "doubling", self.D))
                self._build()
