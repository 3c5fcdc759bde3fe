"""Price ingestion, monthly returns and rolling windows."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from bpps.errors import AlignmentError, DataError, WindowError

RETURN_METHODS = ("simple", "log")


def _as_month_ends(dates: Iterable) -> np.ndarray:
    idx = pd.DatetimeIndex(pd.to_datetime(list(dates)))
    return (idx + pd.offsets.MonthEnd(0)).values.astype("datetime64[D]")


def _check_consecutive_months(dates: np.ndarray, label: str) -> None:
    months = dates.astype("datetime64[M]").astype(np.int64)
    gaps = np.flatnonzero(np.diff(months) != 1)
    if gaps.size:
        i = int(gaps[0])
        raise DataError(
            f"{label}: missing or duplicated month between {dates[i]} and {dates[i + 1]}"
        )


@dataclass(frozen=True)
class PriceSeries:
    """Month-end prices of one asset."""

    asset_id: str
    dates: np.ndarray
    prices: np.ndarray

    def __post_init__(self) -> None:
        dates = _as_month_ends(self.dates)
        prices = np.asarray(self.prices, dtype=float)
        if dates.shape != prices.shape:
            raise DataError(f"{self.asset_id}: {dates.size} dates but {prices.size} prices")
        if prices.size < 2:
            raise DataError(f"{self.asset_id}: need at least 2 prices")
        if np.any(np.diff(dates.astype(np.int64)) <= 0):
            raise DataError(f"{self.asset_id}: dates must be strictly increasing")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise DataError(f"{self.asset_id}: prices must be finite and positive")
        _check_consecutive_months(dates, self.asset_id)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)


@dataclass(frozen=True)
class ReturnPanel:
    """Aligned T x K matrix of monthly returns.

    Row ``t`` holds the returns realized over month ``dates[t]``.
    """

    dates: np.ndarray
    assets: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self) -> None:
        returns = np.asarray(self.returns, dtype=float)
        dates = np.asarray(self.dates).astype("datetime64[D]")
        if returns.ndim != 2 or returns.shape != (dates.size, len(self.assets)):
            raise DataError(
                f"returns shape {returns.shape} does not match "
                f"{dates.size} dates x {len(self.assets)} assets"
            )
        if len(self.assets) < 2:
            raise DataError("a return panel needs at least 2 assets")
        if not np.all(np.isfinite(returns)):
            raise DataError("return panel has missing or non-finite cells")
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "assets", tuple(self.assets))

    @property
    def n_periods(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def truncate(self, end: int) -> "ReturnPanel":
        """Panel restricted to rows ``0 .. end-1``."""
        return ReturnPanel(self.dates[:end], self.assets, self.returns[:end])

    def index_of(self, date) -> int:
        """Row index of the month containing ``date``."""
        target = np.datetime64(pd.Timestamp(date) + pd.offsets.MonthEnd(0), "D")
        hits = np.flatnonzero(self.dates == target)
        if hits.size == 0:
            raise DataError(f"date {date} is not in the panel ({self.dates[0]} .. {self.dates[-1]})")
        return int(hits[0])

    def date_at(self, t: int) -> np.datetime64:
        """Month-end date of row ``t``; ``t == n_periods`` extrapolates one month."""
        if t < self.n_periods:
            return self.dates[t]
        last = pd.Timestamp(self.dates[-1])
        return np.datetime64(last + pd.offsets.MonthEnd(t - self.n_periods + 1), "D")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.returns, index=pd.DatetimeIndex(self.dates, name="date"),
                            columns=list(self.assets))


@dataclass(frozen=True)
class Window:
    """Strictly-past view of a panel: rows ``end_index - length_months .. end_index - 1``."""

    panel: ReturnPanel
    end_index: int
    length_months: int

    def __post_init__(self) -> None:
        if self.length_months <= 0:
            raise WindowError("window length must be positive")
        if self.end_index - self.length_months < 0:
            raise WindowError(
                f"period {self.end_index} has only {max(self.end_index, 0)} months of history, "
                f"{self.length_months} required"
            )
        if self.end_index > self.panel.n_periods:
            raise WindowError(f"period {self.end_index} is beyond the panel end")

    @property
    def rows(self) -> range:
        return range(self.end_index - self.length_months, self.end_index)

    @property
    def values(self) -> np.ndarray:
        return self.panel.returns[self.end_index - self.length_months:self.end_index]


def compute_returns(series: PriceSeries, method: str = "simple") -> np.ndarray:
    """Period returns of a price series, one shorter than the input."""
    if method not in RETURN_METHODS:
        raise ValueError(f"unknown return method {method!r}")
    p = series.prices
    if np.any(p <= 0):
        raise DataError(f"{series.asset_id}: non-positive price")
    ratio = p[1:] / p[:-1]
    return np.log(ratio) if method == "log" else ratio - 1.0


def align_panel(series_list: Sequence[PriceSeries], method: str = "simple") -> ReturnPanel:
    """Intersect the return calendars of several series into one panel.

    Columns keep the order of ``series_list``.
    """
    if len(series_list) < 2:
        raise AlignmentError("need at least two price series")
    names = [s.asset_id for s in series_list]
    if len(set(names)) != len(names):
        raise AlignmentError(f"duplicate asset ids: {names}")

    per_asset = []
    for s in series_list:
        per_asset.append((s.dates[1:], compute_returns(s, method)))

    common = per_asset[0][0]
    for dates, _ in per_asset[1:]:
        common = np.intersect1d(common, dates)
    if common.size == 0:
        ranges = ", ".join(f"{s.asset_id} [{s.dates[0]}..{s.dates[-1]}]" for s in series_list)
        raise AlignmentError(f"price series share no common return month: {ranges}")

    columns = []
    for dates, rets in per_asset:
        pos = np.searchsorted(dates, common)
        columns.append(rets[pos])
    return ReturnPanel(common, tuple(names), np.column_stack(columns))


def slice_window(panel: ReturnPanel, t: int, months: int) -> Window:
    return Window(panel, t, months)


def month_end_prices(frame: pd.DataFrame) -> list[PriceSeries]:
    """Sample a long ``date, asset_id, price`` frame at month ends.

    The last available observation of each calendar month is kept.
    Asset order follows first appearance in the frame.
    """
    missing = {"date", "asset_id", "price"} - set(frame.columns)
    if missing:
        raise DataError(f"price table lacks columns {sorted(missing)}")
    df = frame.loc[:, ["date", "asset_id", "price"]].copy()
    try:
        df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d")
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad date value: {exc}") from exc
    df["asset_id"] = df["asset_id"].astype(str)
    df["price"] = pd.to_numeric(df["price"], errors="coerce")
    if df["price"].isna().any():
        bad = df.loc[df["price"].isna(), "asset_id"].unique().tolist()
        raise DataError(f"non-numeric prices for assets {bad}")

    out = []
    for asset in pd.unique(df["asset_id"]):
        sub = df[df["asset_id"] == asset].sort_values("date", kind="mergesort")
        month = sub["date"].dt.to_period("M")
        last = sub.groupby(month, sort=True).tail(1)
        out.append(PriceSeries(asset, last["date"].to_numpy(), last["price"].to_numpy()))
    return out


def read_prices(paths: Sequence[str | Path]) -> list[PriceSeries]:
    """Load price CSVs (one per asset or one long file) into month-end series."""
    frames = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise DataError(f"price file not found: {path}")
        frames.append(pd.read_csv(path, encoding="utf-8", float_precision="round_trip",
                                  dtype={"asset_id": str}))
    if not frames:
        raise DataError("no price files given")
    return month_end_prices(pd.concat(frames, ignore_index=True))


def write_prices(series_list: Sequence[PriceSeries], path: str | Path) -> None:
    rows = []
    for s in series_list:
        for d, p in zip(s.dates, s.prices):
            rows.append((str(d), s.asset_id, repr(float(p))))
    frame = pd.DataFrame(rows, columns=["date", "asset_id", "price"])
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


def write_panel(panel: ReturnPanel, path: str | Path) -> None:
    """Dump a panel as ``date, asset_1, ..., asset_K``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["date", *panel.assets]) + "\n")
        for d, row in zip(panel.dates, panel.returns):
            fh.write(",".join([str(d), *(repr(float(v)) for v in row)]) + "\n")


def read_panel(path: str | Path) -> ReturnPanel:
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    dates = pd.to_datetime(frame.pop("date"), format="%Y-%m-%d").to_numpy()
    return ReturnPanel(dates, tuple(frame.columns), frame.to_numpy(dtype=float))
