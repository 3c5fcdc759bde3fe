"""Forecasting experts whose predictive distributions feed the synthesis model.

Every expert emits, per asset, an independent normal predictive for the
next month's return: a point forecast and a standard deviation estimated
on strictly past data.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from bpps.errors import DataError, WindowError
from bpps.market_data import ReturnPanel, Window, slice_window

log = logging.getLogger(__name__)

STDEV_FLOOR = 1e-6
RIDGE = 1e-8
AR_WINDOW = 36
DEFAULT_EXPERTS = ("Mean[1]", "Mean[3]", "AR(1)", "AR(2)", "AR(3)")

_MEAN_RE = re.compile(r"^Mean\[(\d+)\]$")
_AR_RE = re.compile(r"^AR\((\d+)\)$")


@dataclass(frozen=True)
class ExpertForecast:
    expert_id: str
    period: int
    mean: np.ndarray
    stdev: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.mean)):
            raise DataError(f"{self.expert_id}@{self.period}: non-finite forecast mean")
        if not np.all(self.stdev > 0):
            raise DataError(f"{self.expert_id}@{self.period}: forecast stdev must be positive")


@dataclass(frozen=True)
class ExpertSpec:
    """Parsed expert identifier: ``Mean[years]`` or ``AR(p)``."""

    kind: str
    order: int

    @classmethod
    def parse(cls, name: str) -> "ExpertSpec":
        name = name.strip()
        if m := _MEAN_RE.match(name):
            return cls("mean", int(m.group(1)))
        if m := _AR_RE.match(name):
            return cls("ar", int(m.group(1)))
        raise ValueError(f"unknown expert {name!r}; expected 'Mean[y]' or 'AR(p)'")

    @property
    def name(self) -> str:
        return f"Mean[{self.order}]" if self.kind == "mean" else f"AR({self.order})"

    @property
    def window(self) -> int:
        return 12 * self.order if self.kind == "mean" else AR_WINDOW

    def forecast(self, panel: ReturnPanel, t: int) -> ExpertForecast:
        w = slice_window(panel, t, self.window)
        if self.kind == "mean":
            return mean_expert(w, self.order)
        return ar_expert(w, self.order)


def mean_expert(window: Window, years: int) -> ExpertForecast:
    """Sample mean and sample standard deviation over the trailing window."""
    if window.length_months != 12 * years:
        raise WindowError(f"Mean[{years}] needs a {12 * years}-month window, got {window.length_months}")
    x = window.values
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
    return ExpertForecast(f"Mean[{years}]", window.end_index, mean, np.maximum(sd, STDEV_FLOOR))


def ar_design(y: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressand and ``[1, y_{t-1}, ..., y_{t-p}]`` design for an AR(p) fit."""
    n = y.shape[0]
    rows = n - p
    X = np.ones((rows, p + 1))
    for i in range(1, p + 1):
        X[:, i] = y[p - i:n - i]
    return y[p:], X


def _ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    xtx = X.T @ X
    xty = X.T @ y
    if np.linalg.matrix_rank(X) < X.shape[1]:
        xtx = xtx + RIDGE * np.eye(xtx.shape[0])
    return np.linalg.solve(xtx, xty)


def ar_expert(window: Window, p: int) -> ExpertForecast:
    """Per-asset AR(p) fitted by least squares; one-step-ahead forecast.

    The stdev is the residual standard deviation with divisor
    ``n_obs - p - 1``. ``p = 0`` reduces to the window mean.
    """
    x = window.values
    n = x.shape[0]
    if p < 0:
        raise ValueError("AR order must be non-negative")
    if n - p < p + 2:
        raise WindowError(f"AR({p}) needs at least {2 * p + 2} observations, got {n}")
    K = x.shape[1]
    mean = np.empty(K)
    sd = np.empty(K)
    for a in range(K):
        y, X = ar_design(x[:, a], p)
        coef = _ols(X, y)
        resid = y - X @ coef
        dof = y.shape[0] - p - 1
        sd[a] = np.sqrt(resid @ resid / dof)
        lags = x[::-1, a][:p]
        mean[a] = coef[0] + coef[1:] @ lags
    return ExpertForecast(f"AR({p})", window.end_index, mean, np.maximum(sd, STDEV_FLOOR))


@dataclass(frozen=True)
class ExpertBank:
    """Forecast table for J experts over a contiguous range of panel periods.

    ``mean[i, j]`` and ``stdev[i, j]`` are the K-vectors of expert ``j`` for
    period ``periods[i]``.
    """

    expert_ids: tuple[str, ...]
    assets: tuple[str, ...]
    periods: np.ndarray
    dates: np.ndarray
    mean: np.ndarray
    stdev: np.ndarray

    def __post_init__(self) -> None:
        if len(self.expert_ids) < 1:
            raise DataError("an expert bank needs at least one expert")
        shape = (self.periods.size, len(self.expert_ids), len(self.assets))
        if self.mean.shape != shape or self.stdev.shape != shape:
            raise DataError(f"forecast arrays must have shape {shape}")
        if self.periods.size and np.any(np.diff(self.periods) != 1):
            raise DataError("bank periods must be contiguous")
        if not np.all(self.stdev > 0):
            raise DataError("forecast stdevs must be positive")

    @property
    def n_experts(self) -> int:
        return len(self.expert_ids)

    @property
    def start(self) -> int:
        return int(self.periods[0])

    @property
    def end(self) -> int:
        """Last covered period (inclusive)."""
        return int(self.periods[-1])

    def covers(self, t: int) -> bool:
        return self.periods.size > 0 and self.start <= t <= self.end

    def _pos(self, t: int) -> int:
        if not self.covers(t):
            raise DataError(f"expert bank has no forecasts for period {t}")
        return t - self.start

    def at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """(mean, stdev), each J x K, for period ``t``."""
        i = self._pos(t)
        return self.mean[i], self.stdev[i]

    def span(self, first: int, last: int) -> tuple[np.ndarray, np.ndarray]:
        """Forecasts for periods ``first .. last`` inclusive, each (n, J, K)."""
        if last < first:
            J, K = len(self.expert_ids), len(self.assets)
            return np.empty((0, J, K)), np.empty((0, J, K))
        i, k = self._pos(first), self._pos(last)
        return self.mean[i:k + 1], self.stdev[i:k + 1]

    def forecast(self, expert_id: str, t: int) -> ExpertForecast:
        j = self.expert_ids.index(expert_id)
        mean, sd = self.at(t)
        return ExpertForecast(expert_id, t, mean[j], sd[j])

    def select(self, expert_ids: Sequence[str]) -> "ExpertBank":
        idx = [self.expert_ids.index(e) for e in expert_ids]
        return ExpertBank(tuple(expert_ids), self.assets, self.periods, self.dates,
                          self.mean[:, idx], self.stdev[:, idx])


def build_bank(panel: ReturnPanel, specs: Sequence[str] = DEFAULT_EXPERTS,
               start: int | None = None, end: int | None = None) -> ExpertBank:
    """Run every expert for periods ``start .. end`` (inclusive).

    ``end`` may equal ``panel.n_periods``: the forecast for the month after
    the last observed one.
    """
    parsed = [ExpertSpec.parse(s) for s in specs]
    if not parsed:
        raise ValueError("need at least one expert")
    longest = max(s.window for s in parsed)
    start = longest if start is None else start
    end = panel.n_periods if end is None else end
    if start < longest:
        raise WindowError(f"bank start {start} precedes the longest expert window ({longest} months)")
    if end > panel.n_periods or end < start:
        raise WindowError(f"bank range {start}..{end} is outside the panel (0..{panel.n_periods})")

    n, J, K = end - start + 1, len(parsed), panel.n_assets
    mean = np.empty((n, J, K))
    sd = np.empty((n, J, K))
    for i, t in enumerate(range(start, end + 1)):
        for j, spec in enumerate(parsed):
            fc = spec.forecast(panel, t)
            mean[i, j] = fc.mean
            sd[i, j] = fc.stdev
    periods = np.arange(start, end + 1)
    dates = np.array([panel.date_at(t) for t in periods], dtype="datetime64[D]")
    return ExpertBank(tuple(s.name for s in parsed), panel.assets, periods, dates, mean, sd)


def write_forecasts(bank: ExpertBank, path: str | Path) -> None:
    """Export as ``date, expert_id, asset_id, mean, stdev``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("date,expert_id,asset_id,mean,stdev\n")
        for i, d in enumerate(bank.dates):
            for j, e in enumerate(bank.expert_ids):
                for a, asset in enumerate(bank.assets):
                    fh.write(f"{d},{e},{asset},{float(bank.mean[i, j, a])!r},{float(bank.stdev[i, j, a])!r}\n")


def read_forecasts(path: str | Path, panel: ReturnPanel) -> ExpertBank:
    """Import externally produced forecasts, aligned to ``panel``'s calendar.

    Expert order follows first appearance in the file.
    """
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip",
                        dtype={"expert_id": str, "asset_id": str})
    need = {"date", "expert_id", "asset_id", "mean", "stdev"}
    if need - set(frame.columns):
        raise DataError(f"forecast file lacks columns {sorted(need - set(frame.columns))}")
    frame["date"] = pd.to_datetime(frame["date"], format="%Y-%m-%d") + pd.offsets.MonthEnd(0)
    experts = tuple(pd.unique(frame["expert_id"]))
    unknown = set(frame["asset_id"]) - set(panel.assets)
    if unknown:
        raise DataError(f"forecasts reference unknown assets {sorted(unknown)}")

    months = sorted(pd.unique(frame["date"]))
    periods = []
    for d in months:
        d64 = np.datetime64(pd.Timestamp(d), "D")
        if d64 == panel.date_at(panel.n_periods):
            periods.append(panel.n_periods)
        else:
            periods.append(panel.index_of(pd.Timestamp(d)))
    periods = np.asarray(periods)

    n, J, K = len(months), len(experts), panel.n_assets
    mean = np.full((n, J, K), np.nan)
    sd = np.full((n, J, K), np.nan)
    pos_d = {pd.Timestamp(d): i for i, d in enumerate(months)}
    pos_e = {e: j for j, e in enumerate(experts)}
    pos_a = {a: k for k, a in enumerate(panel.assets)}
    for row in frame.itertuples(index=False):
        i, j, k = pos_d[pd.Timestamp(row.date)], pos_e[row.expert_id], pos_a[row.asset_id]
        mean[i, j, k] = row.mean
        sd[i, j, k] = row.stdev
    if np.isnan(mean).any() or np.isnan(sd).any():
        raise DataError("forecast file does not cover every (date, expert, asset) cell")
    dates = np.array([panel.date_at(t) for t in periods], dtype="datetime64[D]")
    return ExpertBank(experts, panel.assets, periods, dates, mean, np.maximum(sd, STDEV_FLOOR))
