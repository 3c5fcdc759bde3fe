"""Long-only mean-variance problems: minimum variance at a mean target, max-Sharpe frontier search, quadratic utility."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from bpps.errors import InfeasibleError
from bpps.portfolio import _kernels as kern
from bpps.portfolio.configs import MvConfig, OptimizerConfig, UtilityConfig, pick_best
from bpps.posterior_stats import Moments, q_alpha

log = logging.getLogger(__name__)

_MEAN_TOL = 1e-12


@dataclass(frozen=True)
class FrontierPoint:
    eta: float
    w: np.ndarray
    mean: float
    variance: float
    sharpe: float


def _lipschitz(H: np.ndarray) -> float:
    lam = float(np.linalg.eigvalsh(0.5 * (H + H.T))[-1]) if H.size else 0.0
    return max(lam * (1.0 + 1e-12), 1e-12)


def _solve_qp(H, c, mu, eta, constrained, w0, opt: OptimizerConfig) -> np.ndarray:
    H = np.ascontiguousarray(H, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    w, it, res = kern.fista_quadratic(H, c, np.ascontiguousarray(mu, dtype=float), float(eta),
                                      bool(constrained), np.ascontiguousarray(w0, dtype=float),
                                      _lipschitz(H), int(opt.max_iters), float(opt.step_tol))
    if res > opt.kkt_tol:
        log.debug("projected gradient stopped after %d iterations with KKT residual %.3g", it, res)
    return w


def _moments(m: Moments) -> tuple[np.ndarray, np.ndarray]:
    mu = np.asarray(m.mean, dtype=float)
    cov = np.asarray(m.cov, dtype=float)
    if cov.shape != (mu.size, mu.size):
        raise ValueError(f"covariance {cov.shape} does not match {mu.size} means")
    return mu, 0.5 * (cov + cov.T)


def _min_variance_on(cov: np.ndarray, idx: np.ndarray, opt: OptimizerConfig) -> np.ndarray:
    """Minimum-variance simplex weights using only the assets in ``idx``."""
    K = cov.shape[0]
    w = np.zeros(K)
    if idx.size == 1:
        w[idx[0]] = 1.0
        return w
    sub = cov[np.ix_(idx, idx)]
    n = idx.size
    w[idx] = _solve_qp(2.0 * sub, np.zeros(n), np.zeros(n), 0.0, False, np.full(n, 1.0 / n), opt)
    return w


def solve_min_variance_at_mean(m: Moments, eta: float, opt: OptimizerConfig | None = None,
                               w0: np.ndarray | None = None) -> np.ndarray:
    """Minimize ``w' Sigma w`` over the simplex subject to ``w' mu >= eta``.

    Raises
    ------
    InfeasibleError
        If ``eta`` exceeds the largest asset mean.
    """
    opt = opt or OptimizerConfig()
    mu, cov = _moments(m)
    return _min_variance_at(mu, cov, float(eta), opt, None, w0)


def _min_variance_at(mu, cov, eta, opt, w_free, w0) -> np.ndarray:
    K = mu.size
    top = float(mu.max())
    slack = _MEAN_TOL * max(1.0, abs(top))
    if eta > top + slack:
        raise InfeasibleError(f"mean target {eta!r} exceeds the largest asset mean {top!r}")
    if eta >= top - slack:
        return _min_variance_on(cov, np.flatnonzero(mu >= top - slack), opt)
    if w_free is None:
        w_free = _solve_qp(2.0 * cov, np.zeros(K), mu, 0.0, False, np.full(K, 1.0 / K), opt)
    if mu @ w_free >= eta:
        return w_free
    start = w_free if w0 is None else w0
    return _solve_qp(2.0 * cov, np.zeros(K), mu, eta, True, start, opt)


def _sharpe(excess: float, variance: float) -> float:
    if variance > 0.0:
        return excess / np.sqrt(variance)
    if excess == 0.0:
        return 0.0
    return np.inf if excess > 0.0 else -np.inf


def frontier(m: Moments, cfg: MvConfig | None = None, opt: OptimizerConfig | None = None) -> list[FrontierPoint]:
    """Minimum-variance solutions for every feasible mean target of the grid."""
    cfg = cfg or MvConfig()
    opt = opt or OptimizerConfig()
    mu, cov = _moments(m)
    top = float(mu.max())
    slack = _MEAN_TOL * max(1.0, abs(top))
    K = mu.size
    w_free = _solve_qp(2.0 * cov, np.zeros(K), mu, 0.0, False, np.full(K, 1.0 / K), opt)
    points = []
    w_prev = None
    for eta in cfg.grid_for(mu):
        if eta > top + slack:
            continue
        w = _min_variance_at(mu, cov, float(eta), opt, w_free, w_prev)
        w_prev = w
        mean = float(mu @ w)
        var = max(float(w @ cov @ w), 0.0)
        points.append(FrontierPoint(eta, w, mean, var, float(_sharpe(mean - cfg.risk_free, var))))
    return points


def max_sharpe_frontier(m: Moments, cfg: MvConfig | None = None, opt: OptimizerConfig | None = None) -> np.ndarray:
    """Frontier portfolio with the highest Sharpe ratio.

    Ties in Sharpe ratio go to the lower variance, then to the
    lexicographically smallest weights.
    """
    opt = opt or OptimizerConfig()
    points = frontier(m, cfg, opt)
    if not points:
        raise InfeasibleError("every mean target on the grid exceeds the largest asset mean")
    best = pick_best([(p.sharpe, p.variance, p.w) for p in points], opt.obj_tol)
    return best[2]


def utility(m: Moments, w: np.ndarray, gamma: float) -> float:
    """Expected quadratic utility ``w'mu - gamma/2 * E[(w'x)^2]``."""
    mu, cov = _moments(m)
    mean = float(mu @ w)
    return mean - 0.5 * gamma * (float(w @ cov @ w) + mean * mean)


def solve_quadratic_utility(m: Moments, cfg: UtilityConfig | None = None,
                            opt: OptimizerConfig | None = None) -> np.ndarray:
    """Maximize ``w'mu - gamma/2 * w'(Sigma + mu mu')w`` over the simplex."""
    cfg = cfg or UtilityConfig()
    opt = opt or OptimizerConfig()
    mu, cov = _moments(m)
    K = mu.size
    H = cfg.gamma * (cov + np.outer(mu, mu))
    return _solve_qp(H, -mu, mu, 0.0, False, np.full(K, 1.0 / K), opt)


def q_alpha_objective(m: Moments, w, alpha: float, mode: str) -> float:
    """Mean/volatility risk objective ``-w'mu + q_alpha * sqrt(w' Sigma w)`` at the posterior mean."""
    mu, cov = _moments(m)
    w = np.asarray(w, dtype=float)
    return float(-(mu @ w) + q_alpha(mode, alpha) * np.sqrt(max(float(w @ cov @ w), 0.0)))
