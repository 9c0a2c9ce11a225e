"""Pure-numpy versions of the hot kernels.

These mirror ``_kernels.pyx`` line for line and are used when the compiled
extension is unavailable or when ``MSMWC_KERNELS=python`` is set.
"""

import math

import numpy as np


def _log_sum(lam, log_a, x, eta, log_b):
    """ln S(lam) and its derivative, S(lam) = sum_i max(b_i, a_i exp(eta_i (lam - x_i)))."""
    z = log_a + eta * (lam - x)
    t = np.maximum(z, log_b)
    m = t.max()
    e = np.exp(t - m)
    s = e.sum()
    free = z > log_b
    ds = np.dot(eta[free], e[free])
    return m + math.log(s), ds / s


def entropy_solve(a, x, eta, b, max_iter=200, tol_lam=1e-14, tol_log=1e-13):
    """Minimize <w, x> + sum_i (1/eta_i) f_KL(w_i, a_i) over {w >= b, sum w = 1}.

    Arrays are the supported coordinates only. Returns (w, lam, iterations,
    converged, lam_lo, lam_hi) where [lam_lo, lam_hi] is the initial bracket.
    """
    n = a.shape[0]
    if n == 1:
        return np.ones(1), 0.0, 0, True, 0.0, 0.0
    sum_b = b.sum()
    if sum_b >= 1.0 - 1e-15:
        return b / sum_b, 0.0, 0, True, 0.0, 0.0

    with np.errstate(divide="ignore"):
        log_a = np.log(a)
        log_b = np.log(b)
    eta_min = eta.min()
    lo = x.min() - math.log(1.0 / a.min()) / eta_min - 1.0
    hi = x.max() + math.log(n) / eta_min + 1.0
    # the coordinate whose unclipped weight first reaches 1 gives a tighter upper end
    hi = min(hi, float(np.min(x - log_a / eta)))

    g_lo, _ = _log_sum(lo, log_a, x, eta, log_b)
    width = max(1.0, hi - lo)
    widen = 0
    while g_lo > 0.0 and widen < 200:
        lo -= width
        width *= 2.0
        g_lo, _ = _log_sum(lo, log_a, x, eta, log_b)
        widen += 1
    g, gp = _log_sum(hi, log_a, x, eta, log_b)
    widen = 0
    while g < 0.0 and widen < 200:
        hi += width
        width *= 2.0
        g, gp = _log_sum(hi, log_a, x, eta, log_b)
        widen += 1
    if not (g_lo <= 0.0 <= g):
        raise ArithmeticError("could not bracket the normalizing multiplier")
    bracket_lo, bracket_hi = lo, hi

    lam = hi
    it = 0
    lam_ok = False
    while abs(g) > tol_log and it < max_iter:
        it += 1
        cand = lam - g / gp if gp > 0.0 else lo
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        g, gp = _log_sum(cand, log_a, x, eta, log_b)
        lam = cand
        if g > 0.0:
            hi = lam
        else:
            lo = lam
        if hi - lo <= tol_lam * max(1.0, abs(lam)):
            lam_ok = True
            break

    z = log_a + eta * (lam - x)
    free = z > log_b
    w = np.where(free, np.exp(np.minimum(z, 0.0)), b)
    total = w.sum()
    converged = lam_ok or abs(total - 1.0) <= 1e-12
    free_mass = w[free].sum()
    if free_mass > 0.0:
        w[free] *= (1.0 - b[~free].sum()) / free_mass
        np.maximum(w, b, out=w)
    else:
        w = b / sum_b
    return w, lam, it, converged, bracket_lo, bracket_hi


def ball_multipliers(evals, coef, radius, max_iter=200, tol=1e-13):
    """Solve sum_i (a_i c_i / (a_i + nu))^2 = r^2 for nu >= 0, row by row.

    Rows with ||c|| <= r get nu = 0. Vectorized safeguarded Newton on
    1/||w(nu)|| - 1/r, which is concave and increasing in nu.
    """
    k = evals.shape[0]
    nu = np.zeros(k)
    ac = evals * coef
    norm0 = np.sqrt(np.einsum("ij,ij->i", coef, coef))
    act = norm0 > radius
    if not act.any():
        return nu
    idx = np.flatnonzero(act)
    a = evals[idx]
    acs = ac[idx]
    r = radius[idx]
    lo = np.zeros(idx.size)
    hi = a.max(axis=1) * norm0[idx] / r
    cur = np.zeros(idx.size)
    live = np.ones(idx.size, dtype=bool)
    for _ in range(max_iter):
        den = a + cur[:, None]
        wv = acs / den
        q = np.einsum("ij,ij->i", wv, wv)
        q3 = np.einsum("ij,ij->i", wv * wv, 1.0 / den)
        nrm = np.sqrt(q)
        psi = 1.0 / nrm - 1.0 / r
        dpsi = q3 / (nrm * q)
        done = np.abs(nrm - r) <= tol * r
        lo = np.where(psi < 0.0, cur, lo)
        hi = np.where(psi >= 0.0, cur, hi)
        live &= ~done
        live &= (hi - lo) > 1e-15 * np.maximum(1.0, hi)
        if not live.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = cur - psi / dpsi
        bad = ~((cand > lo) & (cand < hi))
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        cur = np.where(live, cand, cur)
    nu[idx] = cur
    return nu
