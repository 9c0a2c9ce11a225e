# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: the entropy mirror-descent solve and the ball secular equation.

Same contracts as ``_kernels_py``; see that module for the reference version.
"""

import numpy as np

from libc.math cimport exp, log, fabs, sqrt, INFINITY


cdef inline void _log_sum(double lam, double[::1] log_a, const double[::1] x,
                          const double[::1] eta, double[::1] log_b, Py_ssize_t n,
                          double* g, double* gp) noexcept nogil:
    cdef Py_ssize_t i
    cdef double z, t, m = -INFINITY, s = 0.0, ds = 0.0, e
    for i in range(n):
        z = log_a[i] + eta[i] * (lam - x[i])
        t = z if z > log_b[i] else log_b[i]
        if t > m:
            m = t
    for i in range(n):
        z = log_a[i] + eta[i] * (lam - x[i])
        if z > log_b[i]:
            e = exp(z - m)
            s += e
            ds += eta[i] * e
        else:
            s += exp(log_b[i] - m)
    g[0] = m + log(s)
    gp[0] = ds / s


def entropy_solve(const double[::1] a, const double[::1] x, const double[::1] eta, const double[::1] b,
                  int max_iter=200, double tol_lam=1e-14, double tol_log=1e-13):
    cdef Py_ssize_t n = a.shape[0], i
    cdef double sum_b = 0.0
    for i in range(n):
        sum_b += b[i]
    if n == 1:
        return np.ones(1), 0.0, 0, True, 0.0, 0.0
    if sum_b >= 1.0 - 1e-15:
        return np.asarray(b) / sum_b, 0.0, 0, True, 0.0, 0.0

    log_a_arr = np.empty(n)
    log_b_arr = np.empty(n)
    cdef double[::1] log_a = log_a_arr
    cdef double[::1] log_b = log_b_arr
    cdef double eta_min = INFINITY, a_min = INFINITY, x_min = INFINITY, x_max = -INFINITY
    cdef double tight = INFINITY, v
    for i in range(n):
        log_a[i] = log(a[i])
        log_b[i] = log(b[i]) if b[i] > 0.0 else -INFINITY
        if eta[i] < eta_min:
            eta_min = eta[i]
        if a[i] < a_min:
            a_min = a[i]
        if x[i] < x_min:
            x_min = x[i]
        if x[i] > x_max:
            x_max = x[i]
        v = x[i] - log_a[i] / eta[i]
        if v < tight:
            tight = v

    cdef double lo = x_min - log(1.0 / a_min) / eta_min - 1.0
    cdef double hi = x_max + log(<double>n) / eta_min + 1.0
    if tight < hi:
        hi = tight
    cdef double g_lo, gp_lo, g, gp, width, lam, cand
    cdef int widen = 0, it = 0
    cdef bint lam_ok = False
    _log_sum(lo, log_a, x, eta, log_b, n, &g_lo, &gp_lo)
    width = hi - lo if hi - lo > 1.0 else 1.0
    while g_lo > 0.0 and widen < 200:
        lo -= width
        width *= 2.0
        _log_sum(lo, log_a, x, eta, log_b, n, &g_lo, &gp_lo)
        widen += 1
    _log_sum(hi, log_a, x, eta, log_b, n, &g, &gp)
    widen = 0
    while g < 0.0 and widen < 200:
        hi += width
        width *= 2.0
        _log_sum(hi, log_a, x, eta, log_b, n, &g, &gp)
        widen += 1
    if not (g_lo <= 0.0 <= g):
        raise ArithmeticError("could not bracket the normalizing multiplier")
    cdef double bracket_lo = lo, bracket_hi = hi

    lam = hi
    while fabs(g) > tol_log and it < max_iter:
        it += 1
        cand = lam - g / gp if gp > 0.0 else lo
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        _log_sum(cand, log_a, x, eta, log_b, n, &g, &gp)
        lam = cand
        if g > 0.0:
            hi = lam
        else:
            lo = lam
        if hi - lo <= tol_lam * (fabs(lam) if fabs(lam) > 1.0 else 1.0):
            lam_ok = True
            break

    w_arr = np.empty(n)
    cdef double[::1] w = w_arr
    cdef double total = 0.0, free_mass = 0.0, fixed_mass = 0.0, z, scale
    free_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] free = free_arr
    for i in range(n):
        z = log_a[i] + eta[i] * (lam - x[i])
        if z > log_b[i]:
            free[i] = 1
            w[i] = exp(z if z < 0.0 else 0.0)
            free_mass += w[i]
        else:
            w[i] = b[i]
            fixed_mass += b[i]
        total += w[i]
    converged = lam_ok or fabs(total - 1.0) <= 1e-12
    if free_mass > 0.0:
        scale = (1.0 - fixed_mass) / free_mass
        for i in range(n):
            if free[i]:
                w[i] *= scale
                if w[i] < b[i]:
                    w[i] = b[i]
    else:
        for i in range(n):
            w[i] = b[i] / sum_b
    return w_arr, lam, it, converged, bracket_lo, bracket_hi


def ball_multipliers(const double[:, ::1] evals, const double[:, ::1] coef, const double[::1] radius,
                     int max_iter=200, double tol=1e-13):
    cdef Py_ssize_t k = evals.shape[0], n = evals.shape[1], row, i
    nu_arr = np.zeros(k)
    cdef double[::1] nu = nu_arr
    cdef double q, q3, nrm, psi, dpsi, lo, hi, cur, cand, r, amax, wv, den, norm0
    cdef int it
    with nogil:
        for row in range(k):
            r = radius[row]
            norm0 = 0.0
            amax = 0.0
            for i in range(n):
                norm0 += coef[row, i] * coef[row, i]
                if evals[row, i] > amax:
                    amax = evals[row, i]
            norm0 = sqrt(norm0)
            if norm0 <= r:
                continue
            lo = 0.0
            hi = amax * norm0 / r
            cur = 0.0
            for it in range(max_iter):
                q = 0.0
                q3 = 0.0
                for i in range(n):
                    den = evals[row, i] + cur
                    wv = evals[row, i] * coef[row, i] / den
                    q += wv * wv
                    q3 += wv * wv / den
                nrm = sqrt(q)
                psi = 1.0 / nrm - 1.0 / r
                dpsi = q3 / (nrm * q)
                if fabs(nrm - r) <= tol * r:
                    break
                if psi < 0.0:
                    lo = cur
                else:
                    hi = cur
                if hi - lo <= 1e-15 * (hi if hi > 1.0 else 1.0):
                    break
                cand = cur - psi / dpsi
                if not (lo < cand < hi):
                    cand = 0.5 * (lo + hi)
                cur = cand
            nu[row] = cur
    return nu_arr
