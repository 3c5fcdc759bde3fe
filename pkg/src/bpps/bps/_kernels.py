"""Compiled inner loops of the synthesis-model Gibbs sampler.

Conventions
-----------
``G`` has shape (T, K, J+1): row ``G[t, k]`` is ``(1, z_tk1, ..., z_tkJ)``,
the regressors of asset ``k`` at period ``t``. The state vector stacks one
block of length J+1 per asset, so coefficient ``i`` of asset ``k`` lives at
``k * (J+1) + i``. Precision matrices are used throughout the state filter:
with a single discount factor ``e`` the prior precision of period ``t`` is
``e * P_{t-1}``, so each update is a rank-K correction.

All randomness enters as pre-drawn standard variates so results depend
only on the caller's numpy Generator.
"""

from __future__ import annotations

import numpy as np
from numba import njit

JITTER = 1e-10
MAX_REPAIRS = 30


@njit(cache=True, nogil=True)
def chol_repair(A):
    """Lower Cholesky factor of ``A``; on failure symmetrize and add growing jitter."""
    n = A.shape[0]
    repairs = 0
    B = A
    scale = 0.0
    for i in range(n):
        scale += abs(A[i, i])
    scale = max(scale / max(n, 1), 1.0)
    jitter = JITTER * scale
    while True:
        ok = True
        try:
            L = np.linalg.cholesky(B)
        except Exception:
            ok = False
        if ok:
            return L, repairs
        repairs += 1
        if repairs > MAX_REPAIRS:
            raise ValueError("matrix is not positive definite after jitter repair")
        B = 0.5 * (B + B.T) + jitter * np.eye(n)
        jitter *= 10.0


@njit(cache=True, nogil=True)
def solve_lower(L, b, out):
    n = b.shape[0]
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= L[i, j] * out[j]
        out[i] = s / L[i, i]


@njit(cache=True, nogil=True)
def solve_lower_t(L, b, out):
    """Solve ``L.T @ out = b`` for lower-triangular ``L``."""
    n = b.shape[0]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= L[j, i] * out[j]
        out[i] = s / L[i, i]


@njit(cache=True, nogil=True)
def info_filter(G, x, Phi, m0, P0, e):
    """Forward filter in information form given observation precisions ``Phi``.

    Returns filtered means ``m`` (T+1, p), lower Cholesky factors ``L`` of the
    filtered precisions (T+1, p, p), and the number of jitter repairs.
    Index 0 holds the prior.
    """
    T, K, J1 = G.shape
    p = K * J1
    m = np.empty((T + 1, p))
    L = np.empty((T + 1, p, p))
    P = P0.copy()
    eta = P0 @ m0
    L0, repairs = chol_repair(P0)
    L[0] = L0
    m[0] = m0
    w = np.empty(K)
    y = np.empty(p)
    for t in range(T):
        P *= e
        eta *= e
        for k in range(K):
            for l in range(K):
                ph = Phi[t, k, l]
                for i in range(J1):
                    gi = ph * G[t, k, i]
                    for j in range(J1):
                        P[k * J1 + i, l * J1 + j] += gi * G[t, l, j]
        for k in range(K):
            s = 0.0
            for l in range(K):
                s += Phi[t, k, l] * x[t, l]
            w[k] = s
        for k in range(K):
            for i in range(J1):
                eta[k * J1 + i] += G[t, k, i] * w[k]
        Lt, r = chol_repair(P)
        repairs += r
        L[t + 1] = Lt
        solve_lower(Lt, eta, y)
        solve_lower_t(Lt, y, m[t + 1])
    return m, L, repairs


@njit(cache=True, nogil=True)
def sample_states(m, L, e, eps):
    """Backward sampling of the coefficient path.

    With discount evolution the smoothing conditional is
    ``N((1-e) m_t + e beta_{t+1}, (1-e) C_t)``. Returns (T+1, p); for T >= 1
    rows 1..T are filled, for T == 0 row 0 is a prior draw.
    """
    T1, p = m.shape
    T = T1 - 1
    beta = np.zeros((T1, p))
    noise = np.empty(p)
    solve_lower_t(L[T], eps[T], noise)
    beta[T] = m[T] + noise
    s = np.sqrt(max(1.0 - e, 0.0))
    for t in range(T - 1, 0, -1):
        solve_lower_t(L[t], eps[t], noise)
        for i in range(p):
            beta[t, i] = (1.0 - e) * m[t, i] + e * beta[t + 1, i] + s * noise[i]
    return beta


@njit(cache=True, nogil=True)
def residuals(G, x, beta):
    """``x_t - F(z_t) beta_t`` for t = 1..T (beta rows 1..T)."""
    T, K, J1 = G.shape
    r = np.empty((T, K))
    for t in range(T):
        for k in range(K):
            s = x[t, k]
            for i in range(J1):
                s -= G[t, k, i] * beta[t + 1, k * J1 + i]
            r[t, k] = s
    return r


@njit(cache=True, nogil=True)
def vol_filter(resid, n0, D0, delta):
    """Discounted Wishart recursion ``n_t = delta n_{t-1} + 1``, ``D_t = delta D_{t-1} + r r'``."""
    T, K = resid.shape
    n = np.empty(T + 1)
    D = np.empty((T + 1, K, K))
    n[0] = n0
    D[0] = D0
    for t in range(T):
        n[t + 1] = delta * n[t] + 1.0
        for a in range(K):
            for b in range(K):
                D[t + 1, a, b] = delta * D[t, a, b] + resid[t, a] * resid[t, b]
    return n, D


@njit(cache=True, nogil=True)
def wishart_from_factor(D, A):
    """``U^{-T} A A' U^{-1}`` with ``D = U U'``: a W(dof, D^{-1}) draw from a Bartlett factor."""
    K = D.shape[0]
    U, repairs = chol_repair(D)
    M = np.empty((K, K))
    col = np.empty(K)
    for c in range(K):
        solve_lower_t(U, A[:, c].copy(), col)
        M[:, c] = col
    W = M @ M.T
    return 0.5 * (W + W.T), repairs


@njit(cache=True, nogil=True)
def sample_vol(D, delta, A):
    """Backward sampling of observation precisions.

    ``Phi_T ~ W(h_T, D_T^{-1})`` then ``Phi_t = delta Phi_{t+1} + Y_t`` with
    ``Y_t ~ W((1 - delta) h_t, D_t^{-1})``; ``A[t]`` are the matching
    Bartlett factors. Returns (T+1, K, K) with rows 1..T filled.
    """
    T1, K, _ = D.shape
    T = T1 - 1
    Phi = np.zeros((T1, K, K))
    repairs = 0
    if T == 0:
        return Phi, repairs
    W, r = wishart_from_factor(D[T], A[T])
    repairs += r
    Phi[T] = W
    for t in range(T - 1, 0, -1):
        W, r = wishart_from_factor(D[t], A[t])
        repairs += r
        Phi[t] = delta * Phi[t + 1] + W
    return Phi, repairs


@njit(cache=True, nogil=True)
def sample_agents(G, beta, Phi, x, mu, sd, eps1, eps2):
    """Draw latent agent states from their Gaussian full conditional, in place in ``G``.

    Prior ``z_tkj ~ N(mu[t, j, k], sd[t, j, k]^2)``; likelihood
    ``x_t ~ N(c_t + B_t z_t, Phi_t^{-1})``. Uses the exact perturbation
    identity: draw from the prior and a pseudo-observation, then correct by
    the K x K gain ``D B' (V + B D B')^{-1}``.
    """
    T, K, J1 = G.shape
    J = J1 - 1
    repairs = 0
    z0 = np.empty((K, J))
    y = np.empty(K)
    v = np.empty(K)
    for t in range(T):
        U, r = chol_repair(Phi[t])
        repairs += r
        solve_lower_t(U, eps2[t], v)
        V = np.linalg.inv(Phi[t])
        S = 0.5 * (V + V.T)
        for k in range(K):
            base = k * J1
            acc = x[t, k] - beta[t + 1, base] - v[k]
            d = 0.0
            for j in range(J):
                b = beta[t + 1, base + 1 + j]
                s2 = sd[t, j, k] * sd[t, j, k]
                z0[k, j] = mu[t, j, k] + sd[t, j, k] * eps1[t, k, j]
                acc -= b * z0[k, j]
                d += b * b * s2
            S[k, k] += d
            y[k] = acc
        Ls, r = chol_repair(S)
        repairs += r
        tmp = np.empty(K)
        w = np.empty(K)
        solve_lower(Ls, y, tmp)
        solve_lower_t(Ls, tmp, w)
        for k in range(K):
            base = k * J1
            for j in range(J):
                b = beta[t + 1, base + 1 + j]
                G[t, k, 1 + j] = z0[k, j] + sd[t, j, k] * sd[t, j, k] * b * w[k]
    return repairs


@njit(cache=True, nogil=True)
def predictive_draws(beta_last, evol, scale, D_last, delta, A, mu, sd, eps_z, eps_x):
    """One next-period return vector per retained sweep.

    ``beta_{T+1} = beta_T + scale * u`` (``u ~ N(0, C_T)`` stored by the
    sweep), ``Phi_{T+1} ~ W(delta h_T, (delta D_T)^{-1})`` via factor ``A``,
    agent states from the expert predictives, then ``x ~ N(F(z) beta, V)``.
    """
    S, p = beta_last.shape
    J, K = mu.shape
    J1 = J + 1
    out = np.empty((S, K))
    noise = np.empty(K)
    repairs = 0
    for s in range(S):
        Phi, r = wishart_from_factor(delta * D_last[s], A[s])
        repairs += r
        U, r = chol_repair(Phi)
        repairs += r
        solve_lower_t(U, eps_x[s], noise)
        for k in range(K):
            base = k * J1
            acc = beta_last[s, base] + scale * evol[s, base]
            for j in range(J):
                z = mu[j, k] + sd[j, k] * eps_z[s, k, j]
                acc += (beta_last[s, base + 1 + j] + scale * evol[s, base + 1 + j]) * z
            out[s, k] = acc + noise[k]
    return out, repairs
