"""Equal-risk-contribution weights on the simplex."""

from __future__ import annotations

import logging

import numpy as np

from bpps.portfolio.configs import OptimizerConfig, pick_best
from bpps.portfolio.search import descend
from bpps.posterior_stats import Moments

log = logging.getLogger(__name__)

RC_TARGET = 1e-6
RC_WARN = 1e-4


def risk_contributions(w, cov) -> np.ndarray:
    """``w_a (Sigma w)_a / (w' Sigma w)``; sums to one whenever the variance is positive."""
    w = np.asarray(w, dtype=float)
    mrc = np.asarray(cov, dtype=float) @ w
    return w * mrc / float(w @ mrc)


def rc_objective(w, cov) -> float:
    """Sum over all asset pairs of squared risk-contribution differences."""
    rc = risk_contributions(w, cov)
    return float(2.0 * (rc.size * np.sum(rc * rc) - rc.sum() ** 2))


def _rc_value_grad(w: np.ndarray, cov: np.ndarray) -> tuple[float, np.ndarray]:
    u = cov @ w
    s = float(w @ u)
    rc = w * u / s
    K = w.size
    f = 2.0 * (K * float(rc @ rc) - float(rc.sum()) ** 2)
    # the sum of contributions is identically one, so only the squared term varies
    g = (4.0 * K / s) * (rc * u + cov @ (rc * w) - 2.0 * float(rc @ rc) * u)
    return f, g


def repair_covariance(cov) -> np.ndarray:
    """Symmetrize and add diagonal jitter until a Cholesky factorization succeeds."""
    cov = 0.5 * (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T)
    scale = max(float(np.mean(np.abs(np.diag(cov)))), 1e-300)
    jitter = 1e-10 * scale
    out = cov
    for _ in range(30):
        try:
            np.linalg.cholesky(out)
            return out
        except np.linalg.LinAlgError:
            out = cov + jitter * np.eye(cov.shape[0])
            jitter *= 10.0
    raise np.linalg.LinAlgError("covariance could not be repaired to positive definite")


def erc_newton(cov: np.ndarray, tol: float = 1e-15, max_iters: int = 100) -> np.ndarray:
    """Equal-risk weights from the log-barrier program ``min y'Sigma y / 2 - sum(log y) / K``.

    Its stationary point satisfies ``y_a (Sigma y)_a = 1 / K``, so the
    normalized ``y`` has equal risk contributions.
    """
    K = cov.shape[0]
    b = np.full(K, 1.0 / K)
    y = 1.0 / np.sqrt(np.diag(cov))
    y *= np.sqrt(1.0 / float(y @ cov @ y))

    def phi(v):
        return 0.5 * float(v @ cov @ v) - float(b @ np.log(v))

    f = phi(y)
    for _ in range(max_iters):
        g = cov @ y - b / y
        if np.max(np.abs(g * y)) < tol:
            break
        H = cov + np.diag(b / (y * y))
        step = -np.linalg.solve(H, g)
        t = 1.0
        while np.any(y + t * step <= 0.0):
            t *= 0.5
        while t > 1e-16:
            y_new = y + t * step
            f_new = phi(y_new)
            if f_new <= f + 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        else:
            break
        y, f = y_new, f_new
    return y / y.sum()


def solve_risk_parity(m: Moments, opt: OptimizerConfig | None = None) -> np.ndarray:
    """Minimize the pairwise risk-contribution dispersion over the simplex.

    Projected gradient with Armijo backtracking, started from the barrier
    Newton solution; the uniform portfolio and ``opt.restarts`` Dirichlet
    starts are added only when that start misses the contribution target.
    Logs a warning with the best iterate if the spread stays above 1e-4.
    """
    opt = opt or OptimizerConfig()
    cov = repair_covariance(m.cov)
    K = cov.shape[0]

    def fun(w):
        return _rc_value_grad(w, cov)

    def run(w0):
        w, f, _ = descend(fun, w0, opt.max_iters, opt.step_tol)
        return (-f, float(w @ cov @ w), w)

    candidates = [run(erc_newton(cov))]
    if _spread(candidates[0][2], cov) > RC_TARGET:
        rng = np.random.default_rng(np.random.SeedSequence([opt.seed, K]))
        starts = [np.full(K, 1.0 / K)] + list(rng.dirichlet(np.ones(K), size=opt.restarts))
        candidates += [run(w0) for w0 in starts]
    w = pick_best(candidates, opt.obj_tol)[2]
    spread = _spread(w, cov)
    if spread > RC_WARN:
        log.warning("risk parity reached a contribution spread of %.3g only", spread)
    return w


def _spread(w, cov) -> float:
    rc = risk_contributions(w, cov)
    return float(np.max(np.abs(rc - 1.0 / rc.size)))
