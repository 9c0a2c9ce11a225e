"""Shared domain types and the two-phase round protocol."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ProtocolError(RuntimeError):
    """begin_round / end_round called out of order."""


def as_vector(x, d=None, name="vector"):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if d is not None and arr.shape[0] != d:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {d}")
    return arr


@dataclass(frozen=True)
class LossObservation:
    loss: np.ndarray
    hint: np.ndarray
    error: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        loss = as_vector(self.loss, name="loss")
        hint = as_vector(self.hint, loss.shape[0], name="hint")
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "hint", hint)
        object.__setattr__(self, "error", loss - hint)

    @classmethod
    def unhinted(cls, loss):
        loss = as_vector(loss, name="loss")
        return cls(loss, np.zeros_like(loss))


@dataclass(frozen=True)
class SimplexRegion:
    """{w in simplex : w_i = 0 off support, w_i >= lower_bounds[i] on support}."""

    dim: int
    support: np.ndarray
    lower_bounds: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        support = np.asarray(self.support, dtype=bool).copy()
        lower = np.asarray(self.lower_bounds, dtype=float).copy()
        if support.shape != (self.dim,) or lower.shape != (self.dim,):
            raise ValueError("support and lower_bounds must have length dim")
        if not support.any():
            raise ValueError("region has empty support")
        if np.any(lower < 0) or not np.all(np.isfinite(lower)):
            raise ValueError("lower bounds must be finite and nonnegative")
        lower[~support] = 0.0
        if lower.sum() > 1.0 + 1e-12:
            raise ValueError(f"lower bounds sum to {lower.sum()} > 1; region is empty")
        support.setflags(write=False)
        lower.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "lower_bounds", lower)

    @classmethod
    def full(cls, d):
        return cls(d, np.ones(d, dtype=bool), np.zeros(d))

    @classmethod
    def truncated(cls, d, bound):
        return cls(d, np.ones(d, dtype=bool), np.full(d, float(bound)))

    @classmethod
    def restricted(cls, d, support, bound=0.0):
        support = np.asarray(support, dtype=bool)
        return cls(d, support, np.where(support, float(bound), 0.0))

    def with_support(self, support):
        support = np.asarray(support, dtype=bool) & self.support
        return SimplexRegion(self.dim, support, np.where(support, self.lower_bounds, 0.0))

    def vertices(self):
        """Extreme points: all free mass placed on one supported coordinate."""
        slack = 1.0 - self.lower_bounds.sum()
        out = []
        for i in np.flatnonzero(self.support):
            v = self.lower_bounds.copy()
            v[i] += slack
            out.append(v)
        return np.array(out)

    def sample(self, rng, n=1):
        """Random feasible points (Dirichlet mixtures of the vertices)."""
        verts = self.vertices()
        mix = rng.dirichlet(np.ones(len(verts)), size=n)
        return mix @ verts

    def contains(self, w, tol=1e-12):
        w = np.asarray(w, dtype=float)
        return (
            w.shape == (self.dim,)
            and abs(w.sum() - 1.0) <= tol * max(1, self.dim)
            and np.all(w[~self.support] == 0.0)
            and np.all(w >= self.lower_bounds - tol)
        )

    def __eq__(self, other):
        return (
            isinstance(other, SimplexRegion)
            and self.dim == other.dim
            and np.array_equal(self.support, other.support)
            and np.array_equal(self.lower_bounds, other.lower_bounds)
        )

    def __hash__(self):
        return hash((self.dim, self.support.tobytes(), self.lower_bounds.tobytes()))


class RoundProtocol:
    """Two-phase learner contract: begin_round(hint) -> decision, then end_round(loss).

    Subclasses call ``_enter_begin`` / ``_enter_end`` at the top of their
    phase methods; out-of-order calls raise ProtocolError.
    """

    _phase = "begin"
    t = 1  # index of the round about to be (or being) played

    def _enter_begin(self):
        if self._phase != "begin":
            raise ProtocolError(f"begin_round called twice without end_round (round {self.t})")
        self._phase = "end"

    def _enter_end(self):
        if self._phase != "end":
            raise ProtocolError(f"end_round called before begin_round (round {self.t})")
        self._phase = "begin"

    def begin_round(self, hint=None):
        raise NotImplementedError

    def end_round(self, loss, correction_target=None):
        raise NotImplementedError


class RegretTrace:
    """Per-round decisions and losses with regret queries.

    Rounds are 1-indexed; ``interval=(s, e)`` is inclusive on both ends.
    """

    def __init__(self, d, T=None):
        self.d = int(d)
        cap = int(T) if T else 16
        self._dec = np.empty((cap, self.d))
        self._loss = np.empty((cap, self.d))
        self._hint = np.empty((cap, self.d))
        self.n = 0
        self.events = {}

    def _grow(self):
        cap = 2 * self._dec.shape[0]
        for name in ("_dec", "_loss", "_hint"):
            old = getattr(self, name)
            new = np.empty((cap, self.d))
            new[: self.n] = old[: self.n]
            setattr(self, name, new)

    def append(self, decision, loss, hint=None):
        if self.n == self._dec.shape[0]:
            self._grow()
        self._dec[self.n] = decision
        self._loss[self.n] = loss
        self._hint[self.n] = 0.0 if hint is None else hint
        self.n += 1

    def annotate(self, t, label):
        self.events.setdefault(int(t), []).append(str(label))

    @property
    def T(self):
        return self.n

    @property
    def decisions(self):
        return self._dec[: self.n]

    @property
    def losses(self):
        return self._loss[: self.n]

    @property
    def hints(self):
        return self._hint[: self.n]

    @property
    def errors(self):
        return self.losses - self.hints

    def learner_losses(self):
        return np.einsum("ij,ij->i", self.decisions, self.losses)

    def comparator_losses(self, u):
        return self.losses @ u

    def cumulative_regret(self, u):
        return np.cumsum(self.learner_losses() - self.comparator_losses(u))


def _interval_slice(trace, interval):
    if trace.n == 0:
        raise ValueError("empty trace")
    if interval is None:
        return slice(0, trace.n)
    start, end = interval
    if not (1 <= start <= end <= trace.n):
        raise ValueError(f"interval {interval} outside [1, {trace.n}]")
    return slice(start - 1, end)


def regret(trace, comparator, interval=None):
    """sum over the interval of <w_t - u, l_t>."""
    sl = _interval_slice(trace, interval)
    u = as_vector(comparator, name="comparator")
    if u.shape[0] != trace.d:
        raise ValueError(f"comparator dimension {u.shape[0]} != trace dimension {trace.d}")
    dec = trace.decisions[sl]
    loss = trace.losses[sl]
    return float(np.einsum("ij,ij->", dec, loss) - (loss @ u).sum())
