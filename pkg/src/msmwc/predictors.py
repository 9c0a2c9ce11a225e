"""Prediction sequences m_t.

Each kind is split into a pre-play hint m'_t (known before the learner plays)
and a correction target m_t (completed after the loss is revealed). For the
broadcast kinds m_t - m'_t is a coordinate-constant vector, which leaves the
played weights unchanged, so a hint depending on l_t is still implementable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learner import DEFAULT_CAP, RECENTERED_CAP

BASE_KINDS = ("zero", "avg", "last", "bcast1", "bcast_self")
LONG_NAMES = {
    "zero": "zero",
    "running_average": "avg",
    "last_loss": "last",
    "expert_one_broadcast": "bcast1",
    "own_loss_broadcast": "bcast_self",
}


@dataclass(frozen=True)
class PredictorKind:
    name: str
    inner: PredictorKind | None = None

    def __post_init__(self):
        if self.name == "opt_recentered":
            if self.inner is None or self.inner.name == "opt_recentered":
                raise ValueError("opt_recentered needs a non-recentered inner kind")
        elif self.name not in BASE_KINDS:
            raise ValueError(f"unknown predictor kind {self.name!r}")

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text.startswith("opt_recentered"):
            _, _, inner = text.partition(":")
            return cls("opt_recentered", cls.parse(inner or "zero"))
        return cls(LONG_NAMES.get(text, text))

    def __str__(self):
        return f"opt_recentered:{self.inner}" if self.inner else self.name

    @property
    def broadcast(self):
        return self.name in ("bcast1", "bcast_self", "opt_recentered")

    @property
    def rate_cap(self):
        """Cap for the adaptive schedule: recentered targets reach |l - m| <= 4."""
        return RECENTERED_CAP if self.name == "opt_recentered" else DEFAULT_CAP


def pre_hint(kind, history, d=None):
    """m'_t from the losses of rounds 1..t-1 (``history`` has shape (t-1, d))."""
    kind = PredictorKind.parse(kind) if isinstance(kind, str) else kind
    history = np.asarray(history, dtype=float)
    if history.ndim != 2:
        if d is None:
            raise ValueError("history must be 2-D or d must be given")
        history = history.reshape(0, d)
    d = history.shape[1]
    if kind.name == "opt_recentered":
        return pre_hint(kind.inner, history)
    if kind.name == "avg":
        return history.mean(axis=0) if len(history) else np.zeros(d)
    if kind.name == "last":
        return history[-1].copy() if len(history) else np.zeros(d)
    return np.zeros(d)


def correction_target(kind, pre, w, loss):
    """Full m_t once l_t is known."""
    kind = PredictorKind.parse(kind) if isinstance(kind, str) else kind
    pre = np.asarray(pre, dtype=float)
    loss = np.asarray(loss, dtype=float)
    if kind.name == "bcast1":
        return np.full_like(loss, loss[0])
    if kind.name == "bcast_self":
        return np.full_like(loss, float(np.dot(w, loss)))
    if kind.name == "opt_recentered":
        return pre + float(np.dot(w, loss - pre))
    return pre


class HintStream:
    """Incremental pre-hints; equal to :func:`pre_hint` on the observed history."""

    def __init__(self, kind, d):
        self.kind = PredictorKind.parse(kind) if isinstance(kind, str) else kind
        self.base = self.kind.inner if self.kind.name == "opt_recentered" else self.kind
        self.d = d
        self.count = 0
        self._sum = np.zeros(d)
        self._last = np.zeros(d)

    def pre_hint(self):
        if self.base.name == "avg":
            return self._sum / self.count if self.count else np.zeros(self.d)
        if self.base.name == "last":
            return self._last.copy()
        return np.zeros(self.d)

    def target(self, pre, w, loss):
        return correction_target(self.kind, pre, w, loss)

    def observe(self, loss):
        self.count += 1
        if self.base.name == "avg":
            self._sum += loss
        elif self.base.name == "last":
            self._last = np.array(loss, dtype=float)
