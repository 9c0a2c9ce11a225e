"""OLO decision regions, quadratic-norm projections and the base learners.

The learners are *banks*: one object holds K independent learners of the same
type (one per row) so that a master over a learning-rate grid steps them with
batched linear algebra. ``Solo`` adapts a bank of one to the plain
begin_round/end_round protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import RoundProtocol


# ---------------------------------------------------------------------------
# regions and projections


@dataclass(frozen=True)
class DecisionRegion:
    """Euclidean ball, box, or a ball of given radius intersected with an outer region."""

    kind: str
    d: int
    radius: float = np.inf
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    outer: DecisionRegion | None = None

    def __post_init__(self):
        if self.kind == "ball":
            if not self.radius > 0:
                raise ValueError("ball radius must be positive")
        elif self.kind == "box":
            lo = np.broadcast_to(np.asarray(self.lo, float), (self.d,)).copy()
            hi = np.broadcast_to(np.asarray(self.hi, float), (self.d,)).copy()
            if np.any(lo > hi):
                raise ValueError("box has lo > hi")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        elif self.kind == "ball_cap":
            if self.outer is None or not self.radius > 0:
                raise ValueError("ball_cap needs an outer region and a positive radius")
            if self.radius > self.outer.circumradius() + 1e-12:
                raise ValueError("cap radius exceeds the outer region's circumradius")
        else:
            raise ValueError(f"unknown region kind {self.kind!r}")

    @classmethod
    def ball(cls, d, radius):
        return cls("ball", d, radius=float(radius))

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, float)
        return cls("box", lo.size, lo=lo, hi=hi)

    @classmethod
    def ball_cap(cls, outer, radius):
        return cls("ball_cap", outer.d, radius=float(radius), outer=outer)

    def circumradius(self):
        if self.kind == "ball":
            return self.radius
        if self.kind == "box":
            return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))
        return min(self.radius, self.outer.circumradius())

    def contains(self, w, tol=1e-12):
        w = np.asarray(w, float)
        if self.kind == "ball":
            return np.linalg.norm(w) <= self.radius + tol
        if self.kind == "box":
            return bool(np.all(w >= self.lo - tol) and np.all(w <= self.hi + tol))
        return np.linalg.norm(w) <= self.radius + tol and self.outer.contains(w, tol)


def _check_pd(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("A must be symmetric")
    evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
    if evals[0] <= 0:
        raise ValueError("A must be positive definite")
    return evals, evecs


def project_ball_eig(y, evals, evecs, radius):
    """Batched A-norm projection onto balls given A = V diag(evals) V^T per row.

    Shapes: y (K, d), evals (K, d), evecs (K, d, d), radius (K,).
    Returns (w, nu) with (A + nu I) w = A y and ||w|| <= radius.
    """
    coef = np.einsum("kji,kj->ki", evecs, y)
    nu = kernels.ball_multipliers(
        np.ascontiguousarray(evals), np.ascontiguousarray(coef), np.ascontiguousarray(radius, dtype=float)
    )
    scaled = evals * coef / (evals + nu[:, None])
    w = np.einsum("kij,kj->ki", evecs, scaled)
    norms = np.linalg.norm(w, axis=1)
    over = norms > radius
    if over.any():
        w[over] *= (radius[over] / norms[over])[:, None]
    inside = nu == 0
    w[inside] = y[inside]
    return w, nu


def _project_box(y, A, lo, hi, tol=1e-10, max_iter=500):
    """Projected Newton with an Armijo search along the projection arc."""
    if np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        return np.clip(y, lo, hi)
    w = np.clip(y, lo, hi)
    d = y.size

    def f(v):
        r = v - y
        return 0.5 * r @ A @ r

    for _ in range(max_iter):
        g = A @ (w - y)
        resid = w - np.clip(w - g, lo, hi)
        if np.linalg.norm(resid) <= tol:
            return w
        eps = min(1e-8, np.linalg.norm(resid))
        bound = ((w <= lo + eps) & (g > 0)) | ((w >= hi - eps) & (g < 0))
        free = ~bound
        step = np.zeros(d)
        if free.any():
            step[free] = -np.linalg.solve(A[np.ix_(free, free)], g[free])
        step[bound] = -g[bound]
        fw = f(w)
        alpha = 1.0
        while True:
            cand = np.clip(w + alpha * step, lo, hi)
            dec = g[free] @ (w - cand)[free] * 1e-4 + g[bound] @ (w - cand)[bound] * 1e-4
            if f(cand) <= fw - dec or alpha < 1e-12:
                break
            alpha *= 0.5
        w = cand
    raise RuntimeError("box projection did not converge")


def project_quadratic(y, A, region, *, tol=1e-10, max_iter=10_000):
    """argmin over the region of (w - y)^T A (w - y)."""
    y = np.asarray(y, dtype=float)
    evals, evecs = _check_pd(A)
    if region.kind == "ball":
        if np.linalg.norm(y) <= region.radius:
            return y.copy()
        w, _ = project_ball_eig(y[None], evals[None], evecs[None], np.array([region.radius]))
        return w[0]
    if region.kind == "box":
        return _project_box(y, np.asarray(A, float), region.lo, region.hi, tol=tol)
    # ball_cap: Dykstra's alternating projections in the A inner product
    ball = DecisionRegion.ball(region.d, region.radius)
    x = y.copy()
    p = np.zeros_like(y)
    q = np.zeros_like(y)
    for _ in range(max_iter):
        a = project_quadratic(x + p, A, ball)
        p = x + p - a
        b = project_quadratic(a + q, A, region.outer, tol=tol)
        q = a + q - b
        if np.linalg.norm(b - x) <= tol and np.linalg.norm(a - b) <= tol:
            return b
        x = b
    raise RuntimeError("alternating projection did not converge")


def ball_kkt_residual(w, y, A, radius):
    """Residual of (A(w - y) + nu w = 0, nu >= 0, nu (||w|| - r) = 0) at the best nu."""
    w = np.asarray(w, float)
    g = np.asarray(A, float) @ (w - y)
    nw = np.linalg.norm(w)
    if nw < radius * (1 - 1e-9):
        return float(np.linalg.norm(g))
    nu = max(0.0, -float(g @ w) / (nw * nw))
    return float(np.linalg.norm(g + nu * w))


# ---------------------------------------------------------------------------
# matrix utilities


def rank_one_inverse_update(A_inv, v):
    """Inverse of A + v v^T from A^{-1} (Sherman-Morrison); batched over leading axes."""
    A_inv = np.asarray(A_inv, dtype=float)
    v = np.asarray(v, dtype=float)
    Av = np.einsum("...ij,...j->...i", A_inv, v)
    den = 1.0 + np.einsum("...i,...i->...", v, Av)
    if np.any(den <= 0):
        raise ValueError("Sherman-Morrison denominator is not positive; A is not PD")
    return A_inv - np.einsum("...i,...j->...ij", Av, Av) / den[..., None, None]


def sqrtm_psd(M):
    """Symmetric PSD square root via eigendecomposition (batched)."""
    M = np.asarray(M, dtype=float)
    evals, evecs = np.linalg.eigh(0.5 * (M + np.swapaxes(M, -1, -2)))
    root = np.sqrt(np.clip(evals, 0.0, None))
    return np.einsum("...ij,...j,...kj->...ik", evecs, root, evecs)


# ---------------------------------------------------------------------------
# learners


def _as_rows(x, k=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if k is not None and x.size == 1:
        x = np.full(k, x[0])
    return x


class _BallBank:
    """Shared plumbing: K learners in R^d each constrained to a ball."""

    def __init__(self, d, radius, k=None):
        self.d = int(d)
        self.radius = _as_rows(radius, k)
        if np.any(self.radius <= 0):
            raise ValueError("radii must be positive")
        self.n_experts = self.radius.size
        self._phase = "begin"
        self.t = 1

    def _begin(self):
        if self._phase != "begin":
            raise RuntimeError(f"begin_round called twice (round {self.t})")
        self._phase = "end"

    def _end(self):
        if self._phase != "end":
            raise RuntimeError(f"end_round before begin_round (round {self.t})")
        self._phase = "begin"
        self.t += 1

    @staticmethod
    def _rows(active, k):
        if active is None or np.all(active):
            return slice(None)
        return np.flatnonzero(active)


class ZeroLearner(_BallBank):
    """Always plays the origin (for comparators too small to matter)."""

    def __init__(self, d, k=1):
        super().__init__(d, np.ones(k))

    def begin_round(self, hint, active=None):
        self._begin()
        return np.zeros((self.n_experts, self.d))

    def end_round(self, loss, target, center=None, active=None):
        self._end()


class OptimisticGD(_BallBank):
    """w_t = P(w'_t - eta m_t), w'_{t+1} = P(w'_t - eta l_t), Euclidean ball projections."""

    def __init__(self, d, eta, radius):
        eta = _as_rows(eta)
        super().__init__(d, radius, eta.size)
        self.eta = _as_rows(eta, self.n_experts)
        if np.any(self.eta <= 0):
            raise ValueError("rates must be positive")
        self.w_prime = np.zeros((self.n_experts, self.d))
        self.w = None

    def _proj(self, y, r):
        n = np.linalg.norm(y, axis=1)
        scale = np.minimum(1.0, r / np.maximum(n, 1e-300))
        return y * scale[:, None]

    def begin_round(self, hint, active=None):
        self._begin()
        self.w = self._proj(self.w_prime - self.eta[:, None] * hint, self.radius)
        return self.w

    def end_round(self, loss, target, center=None, active=None):
        self._end()
        rows = self._rows(active, self.n_experts)
        upd = self._proj(self.w_prime - self.eta[:, None] * loss, self.radius)
        self.w_prime[rows] = upd[rows]


class OnlineNewtonStep(_BallBank):
    """ONS variant with optimism and the 32 eta <w, l - m>(l - m) gradient correction.

    A_t = eta (4 z_1^2 I + sum_{s<t} (g_s - m_s)(g_s - m_s)^T + 4 z_t^2 I), where
    z_t comes from ``range_hint()`` (constant 1 when not given). The inverse of
    the bracketed matrix is maintained with rank-one updates.
    """

    recentered = False
    refresh_every = 256

    def __init__(self, d, eta, radius, *, range_hint=None):
        eta = _as_rows(eta)
        super().__init__(d, radius, eta.size)
        self.eta = _as_rows(eta, self.n_experts)
        if np.any(self.eta <= 0):
            raise ValueError("rates must be positive")
        k = self.n_experts
        self.range_hint = range_hint
        self.w_prime = np.zeros((k, self.d))
        self.S = np.zeros((k, self.d, self.d))
        self.z1 = None
        self.z = None
        self.M_inv = None
        self.w = None
        self._eig = None
        self._eig_ok = np.zeros(k, dtype=bool)
        self._updates = 0

    # metric -----------------------------------------------------------------
    def _shift(self):
        return 4.0 * self.z1**2 + 4.0 * self.z**2

    def _metric(self, rows=slice(None)):
        eye = np.eye(self.d)
        return self.S[rows] + self._shift() * eye

    def _refresh_inverse(self):
        self.M_inv = np.linalg.inv(self._metric())
        self._eig_ok[:] = False

    def _eigs(self, rows):
        need = rows[~self._eig_ok[rows]]
        if need.size:
            evals, evecs = np.linalg.eigh(self.S[need])
            self._eig[0][need] = evals + self._shift()
            self._eig[1][need] = evecs
            self._eig_ok[need] = True
        return self._eig[0][rows], self._eig[1][rows]

    def _project(self, y):
        norms = np.linalg.norm(y, axis=1)
        out = y.copy()
        rows = np.flatnonzero(norms > self.radius)
        if rows.size:
            evals, evecs = self._eigs(rows)
            w, _ = project_ball_eig(y[rows], self.eta[rows, None] * evals, evecs, self.radius[rows])
            out[rows] = w
        return out

    def _step(self, cost):
        """argmin over the ball of <w, cost> + 0.5 ||w - w'||_A^2."""
        y = self.w_prime - np.einsum("kij,kj->ki", self.M_inv, cost) / self.eta[:, None]
        return self._project(y)

    # protocol ---------------------------------------------------------------
    def begin_round(self, hint, active=None):
        self._begin()
        z = 1.0 if self.range_hint is None else float(self.range_hint())
        if not z > 0:
            raise ValueError("range hint must be positive")
        if self.z1 is None:
            self.z1 = self.z = z
            self._eig = (np.zeros((self.n_experts, self.d)), np.zeros((self.n_experts, self.d, self.d)))
            self._refresh_inverse()
        elif z < self.z:
            raise ValueError(f"range hint decreased from {self.z} to {z}")
        elif z != self.z:
            self.z = z
            self._refresh_inverse()
        self._hint = np.asarray(hint, float)
        self.w = self._step(np.broadcast_to(self._hint, (self.n_experts, self.d)))
        return self.w

    def _gradient(self, loss, err, center):
        base = self.w if center is None else self.w - center
        s = base @ err
        return loss[None, :] + (32.0 * self._grad_rate() * s)[:, None] * err[None, :]

    def _grad_rate(self):
        return self.eta

    def end_round(self, loss, target, center=None, active=None):
        if self.recentered and center is None:
            raise ValueError("recentered learner needs the center point")
        loss = np.asarray(loss, float)
        target = np.asarray(target, float)
        err = loss - target
        grad = self._gradient(loss, err, center if self.recentered else None)
        new_wp = self._step(grad)
        rows = self._rows(active, self.n_experts)
        self.w_prime[rows] = new_wp[rows]
        v = grad - target[None, :]
        if isinstance(rows, slice):
            self.S += np.einsum("ki,kj->kij", v, v)
            self.M_inv = rank_one_inverse_update(self.M_inv, v)
        else:
            self.S[rows] += np.einsum("ki,kj->kij", v[rows], v[rows])
            self.M_inv[rows] = rank_one_inverse_update(self.M_inv[rows], v[rows])
        self._eig_ok[rows] = False
        self._updates += 1
        if self._updates % self.refresh_every == 0:
            self._refresh_inverse()
        self._end()

    def metric(self):
        """Current A_t (per row)."""
        return self.eta[:, None, None] * self._metric()


class MetaGradBase(OnlineNewtonStep):
    """ONS with z = 1 and gradient recentered at an external point (the master's play)."""

    recentered = True

    def __init__(self, d, eta, radius):
        super().__init__(d, eta, radius, range_hint=None)


class OptimisticAdaGrad(_BallBank):
    """Optimistic FTRL with A_t = (1/eta)(I + G_t)^{1/2}.

    The gradient carries the correction 32 eta' <w_t, l_t - m_t>(l_t - m_t);
    ``eta`` scales the regularizer and ``eta_prime`` the correction.
    """

    def __init__(self, d, eta, eta_prime, radius):
        eta = _as_rows(eta)
        super().__init__(d, radius, eta.size)
        k = self.n_experts
        self.eta = _as_rows(eta, k)
        self.eta_prime = _as_rows(eta_prime, k)
        if np.any(self.eta <= 0) or np.any(self.eta_prime <= 0):
            raise ValueError("rates must be positive")
        self.grad_sum = np.zeros((k, self.d))
        self.G = np.zeros((k, self.d, self.d))
        self._evals = np.zeros((k, self.d))
        self._evecs = np.broadcast_to(np.eye(self.d), (k, self.d, self.d)).copy()
        self.w = None

    def _a_eigs(self, rows=slice(None)):
        return np.sqrt(1.0 + np.clip(self._evals[rows], 0, None)) / self.eta[rows, None], self._evecs[rows]

    def begin_round(self, hint, active=None):
        self._begin()
        lin = self.grad_sum + np.asarray(hint, float)[None, :]
        a, V = self._a_eigs()
        coef = np.einsum("kji,kj->ki", V, lin)
        y = -np.einsum("kij,kj->ki", V, coef / a)
        out = y.copy()
        rows = np.flatnonzero(np.linalg.norm(y, axis=1) > self.radius)
        if rows.size:
            out[rows], _ = project_ball_eig(y[rows], a[rows], V[rows], self.radius[rows])
        self.w = out
        return out

    def end_round(self, loss, target, center=None, active=None):
        loss = np.asarray(loss, float)
        target = np.asarray(target, float)
        err = loss - target
        s = self.w @ err
        grad = loss[None, :] + (32.0 * self.eta_prime * s)[:, None] * err[None, :]
        v = grad - target[None, :]
        rows = self._rows(active, self.n_experts)
        self.grad_sum[rows] += grad[rows]
        self.G[rows] += np.einsum("ki,kj->kij", v[rows], v[rows])
        evals, evecs = np.linalg.eigh(self.G[rows])
        self._evals[rows] = evals
        self._evecs[rows] = evecs
        self._end()

    def metric(self):
        a, V = self._a_eigs()
        return np.einsum("kij,kj,klj->kil", V, a, V)


class Solo(RoundProtocol):
    """Run a one-row bank through the plain learner protocol (decisions of shape (d,))."""

    def __init__(self, bank):
        if bank.n_experts != 1:
            raise ValueError("Solo wraps banks of exactly one learner")
        self.bank = bank
        self.d = bank.d
        self.t = 1
        self._hint = None

    def begin_round(self, hint=None):
        self._enter_begin()
        self._hint = np.zeros(self.d) if hint is None else np.asarray(hint, float)
        return self.bank.begin_round(self._hint)[0]

    def end_round(self, loss, correction_target=None, center=None):
        self._enter_end()
        target = self._hint if correction_target is None else correction_target
        self.bank.end_round(np.asarray(loss, float), np.asarray(target, float), center=center)
        self.t += 1
