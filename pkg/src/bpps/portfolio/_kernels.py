"""Compiled simplex projections and accelerated projected gradient."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def proj_simplex(v):
    """Euclidean projection onto {w >= 0, sum w = 1} by the sort-and-threshold rule."""
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    tau = 0.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] - t > 0.0:
            tau = t
    w = np.empty(n)
    for i in range(n):
        w[i] = max(v[i] - tau, 0.0)
    return w


@njit(cache=True, nogil=True)
def _mean_of(v, mu, lam):
    w = proj_simplex(v + lam * mu)
    return w, np.dot(mu, w)


@njit(cache=True, nogil=True)
def proj_simplex_mean(v, mu, eta):
    """Projection onto the simplex intersected with {mu'w >= eta}.

    The projection is ``proj_simplex(v + lam * mu)`` for the smallest
    ``lam >= 0`` meeting the mean constraint; ``lam -> mu'w`` is
    nondecreasing and piecewise linear, so a bracketing search is finished
    by an exact linear solve on the final support.
    """
    w, g = _mean_of(v, mu, 0.0)
    if g >= eta:
        return w
    lo, hi = 0.0, 1.0
    w_hi, g_hi = _mean_of(v, mu, hi)
    it = 0
    while g_hi < eta and it < 200:
        lo = hi
        hi *= 2.0
        w_hi, g_hi = _mean_of(v, mu, hi)
        it += 1
    if g_hi < eta:
        return w_hi
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        w_mid, g_mid = _mean_of(v, mu, mid)
        if g_mid >= eta:
            hi, w_hi, g_hi = mid, w_mid, g_mid
        else:
            lo = mid
        # on a fixed support g is linear in lam: try to land exactly
        n_s = 0
        s_mu = 0.0
        s_v = 0.0
        s_mu2 = 0.0
        s_vmu = 0.0
        for i in range(v.shape[0]):
            if w_hi[i] > 0.0:
                n_s += 1
                s_mu += mu[i]
                s_v += v[i]
                s_mu2 += mu[i] * mu[i]
                s_vmu += v[i] * mu[i]
        slope = s_mu2 - s_mu * s_mu / n_s
        if slope > 0.0:
            icpt = s_vmu - s_mu * (s_v - 1.0) / n_s
            lam = (eta - icpt) / slope
            if lo <= lam <= hi:
                w_lin, g_lin = _mean_of(v, mu, lam)
                if g_lin >= eta - 1e-15 * (1.0 + abs(eta)):
                    same = True
                    for i in range(v.shape[0]):
                        if (w_lin[i] > 0.0) != (w_hi[i] > 0.0):
                            same = False
                            break
                    if same:
                        return w_lin
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return w_hi


@njit(cache=True, nogil=True)
def _project(v, mu, eta, constrained):
    if constrained:
        return proj_simplex_mean(v, mu, eta)
    return proj_simplex(v)


@njit(cache=True, nogil=True)
def fista_quadratic(H, c, mu, eta, constrained, w0, lip, max_iters, step_tol):
    """Minimize ``0.5 w'Hw + c'w`` over the (mean-constrained) simplex.

    Accelerated projected gradient with step ``1 / lip`` and function-value
    restart. Returns the iterate, the iteration count and the final
    projected-gradient residual ``||w - P(w - grad / lip)||_inf``.
    """
    w = _project(w0, mu, eta, constrained)
    y = w.copy()
    tk = 1.0
    f_prev = 0.5 * np.dot(w, H @ w) + np.dot(c, w)
    it = 0
    for it in range(1, max_iters + 1):
        grad = H @ y + c
        w_new = _project(y - grad / lip, mu, eta, constrained)
        f_new = 0.5 * np.dot(w_new, H @ w_new) + np.dot(c, w_new)
        if f_new > f_prev:
            # restart momentum from the last accepted point
            y = w.copy()
            tk = 1.0
            grad = H @ y + c
            w_new = _project(y - grad / lip, mu, eta, constrained)
            f_new = 0.5 * np.dot(w_new, H @ w_new) + np.dot(c, w_new)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        step = np.max(np.abs(w_new - w))
        y = w_new + ((tk - 1.0) / t_next) * (w_new - w)
        w = w_new
        f_prev = f_new
        tk = t_next
        if step < step_tol:
            break
    grad = H @ w + c
    res = np.max(np.abs(w - _project(w - grad / lip, mu, eta, constrained)))
    return w, it, res
