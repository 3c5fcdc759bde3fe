"""Synthetic monthly return panels for tests, demos and the end-to-end check."""

from __future__ import annotations

import numpy as np
import pandas as pd

from bpps.market_data import PriceSeries, ReturnPanel


def month_ends(start: str, n: int) -> np.ndarray:
    idx = pd.date_range(pd.Timestamp(start) + pd.offsets.MonthEnd(0), periods=n, freq="ME")
    return idx.values.astype("datetime64[D]")


def factor_panel(n_assets: int = 10, n_months: int = 144, seed: int = 0,
                 start: str = "2008-01-31") -> ReturnPanel:
    """One-factor returns with asset-specific means and mild AR(1) persistence.

    Monthly scale: means 0.2-1.2%, factor sd 4%, idiosyncratic sd 3-6%.
    """
    rng = np.random.default_rng(seed)
    K = n_assets
    mean = rng.uniform(0.002, 0.012, K)
    phi = rng.uniform(-0.1, 0.3, K)
    beta = rng.uniform(0.5, 1.5, K)
    idio = rng.uniform(0.03, 0.06, K)
    x = np.empty((n_months, K))
    prev = mean.copy()
    for t in range(n_months):
        shock = beta * 0.04 * rng.standard_normal() + idio * rng.standard_normal(K)
        prev = mean + phi * (prev - mean) + shock
        x[t] = np.clip(prev, -0.6, None)
    return ReturnPanel(month_ends(start, n_months), tuple(f"A{i + 1:02d}" for i in range(K)), x)


def trailing_mean_panel(n_assets: int = 4, n_months: int = 96, seed: int = 0, noise: float = 0.01,
                        window: int = 12, start: str = "2008-01-31") -> ReturnPanel:
    """Returns whose conditional mean is the trailing ``window``-month average plus drift.

    The ``Mean[1]`` expert is then the data-generating forecast.
    """
    rng = np.random.default_rng(seed)
    K = n_assets
    x = np.empty((n_months, K))
    x[:window] = rng.uniform(-0.01, 0.03, K) + 0.03 * rng.standard_normal((window, K))
    for t in range(window, n_months):
        x[t] = x[t - window:t].mean(axis=0) + noise * rng.standard_normal(K)
    return ReturnPanel(month_ends(start, n_months), tuple(f"A{i + 1:02d}" for i in range(K)), x)


def prices_from_panel(panel: ReturnPanel, base: float = 100.0) -> list[PriceSeries]:
    """Month-end price paths whose simple returns reproduce ``panel``.

    The first price sits one month before the first return date.
    """
    first = pd.Timestamp(panel.dates[0]) - pd.offsets.MonthEnd(1)
    dates = np.concatenate([[np.datetime64(first, "D")], panel.dates])
    out = []
    for k, asset in enumerate(panel.assets):
        prices = base * np.concatenate([[1.0], np.cumprod(1.0 + panel.returns[:, k])])
        out.append(PriceSeries(asset, dates, prices))
    return out
