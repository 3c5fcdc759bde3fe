"""Moments, quantiles and tail means of posterior-predictive sample sets.

Quantiles are empirical order statistics with the lower-point convention:
the level-``q`` quantile of ``S`` samples is the ``ceil(q * S)``-th
smallest value. Tail means include the quantile point itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from bpps.bps.dlm import PosteriorPredictive
from bpps.errors import DataError

_CEIL_SLACK = 1e-9


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.mean.shape[0]


def _samples(pp) -> np.ndarray:
    return pp.samples if isinstance(pp, PosteriorPredictive) else np.asarray(pp, dtype=float)


def portfolio_samples(pp, w) -> np.ndarray:
    """Portfolio return ``w' x^(s)`` for every draw."""
    x = _samples(pp)
    w = np.asarray(w, dtype=float)
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DataError(f"weights of length {w.shape[0]} do not match samples {x.shape}")
    return x @ w


def moments(pp) -> Moments:
    x = _samples(pp)
    if x.shape[0] < 2:
        raise DataError("need at least two samples for a covariance")
    mean = x.mean(axis=0)
    dev = x - mean
    cov = dev.T @ dev / (x.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    return Moments(mean, cov)


def order_index(level: float, n: int) -> int:
    """0-based index of the ``ceil(level * n)``-th smallest of ``n`` values."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"probability level must be in (0, 1), got {level}")
    k = math.ceil(level * n - _CEIL_SLACK)
    return min(max(k, 1), n) - 1


def quantile(values: np.ndarray, level: float) -> float:
    v = np.asarray(values, dtype=float)
    k = order_index(level, v.size)
    return float(np.partition(v, k)[k])


def upper_tail_mean(values: np.ndarray, level: float) -> float:
    """Mean of the values at or above the level-quantile."""
    v = np.asarray(values, dtype=float)
    q = quantile(v, level)
    # centring on q keeps the result exact for ties and never below q
    return q + float((v[v >= q] - q).mean())


def loss_samples(pp, w) -> np.ndarray:
    return -portfolio_samples(pp, w)


def var_loss(pp, w, beta: float) -> float:
    """Empirical VaR of the loss ``-w'x`` at level ``beta``."""
    return quantile(loss_samples(pp, w), beta)


def cvar_loss(pp, w, beta: float) -> float:
    """Mean loss over draws whose loss is at least the VaR."""
    return upper_tail_mean(loss_samples(pp, w), beta)


def vor(pp, w, alpha: float) -> float:
    """Empirical ``alpha``-quantile of the portfolio return (value-of-return)."""
    return quantile(portfolio_samples(pp, w), alpha)


def cvor(pp, w, alpha: float) -> float:
    """Mean portfolio return over draws at or above the value-of-return."""
    return upper_tail_mean(portfolio_samples(pp, w), alpha)


def q_alpha(mode: str, alpha: float) -> float:
    """Risk multiplier of the mean/volatility quantile objective.

    ``var``: the standard normal ``alpha``-quantile. ``cvar``:
    ``exp(-z^2 / 2) / ((1 - alpha) sqrt(2 pi))``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    z = float(norm.ppf(alpha))
    if mode == "var":
        return z
    if mode == "cvar":
        return math.exp(-0.5 * z * z) / ((1.0 - alpha) * math.sqrt(2.0 * math.pi))
    raise ValueError(f"mode must be 'var' or 'cvar', got {mode!r}")


def write_samples(pp, path, assets=None) -> None:
    """Debug dump of a sample set, one draw per row."""
    x = _samples(pp)
    names = list(assets) if assets is not None else [f"asset_{i + 1}" for i in range(x.shape[1])]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
