"""Rolling monthly backtest of synthesis-based and plug-in portfolio strategies.

At each test period ``t`` every strategy chooses weights from information
strictly before ``t`` (returns of rows ``< t`` and the expert forecasts
issued for ``t``); the realized return is ``w_t' x_t``.

Random streams derive from the run seed through ``SeedSequence`` keys
``(seed, stream, period, chain)``; the stream of a strategy is the CRC32 of
its name, and the three synthesis strategies share the stream of ``"BPS"``.
"""

from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from bpps import __version__
from bpps.bps.dlm import DlmConfig, PosteriorPredictive
from bpps.bps.gibbs import GibbsState, predictive_samples, run_gibbs
from bpps.errors import ConfigError, DataError, InfeasibleError, NumericalError
from bpps.experts import ExpertBank
from bpps.market_data import ReturnPanel
from bpps.portfolio import (
    MvConfig,
    OptimizerConfig,
    QuantileConfig,
    max_sharpe_frontier,
    solve_quantile,
    solve_risk_parity,
)
from bpps.posterior_stats import Moments, moments, var_loss

log = logging.getLogger(__name__)

BPS_STRATEGIES = ("BPPS-MV", "BPPS-VoR", "BPPS-RP")
PLUGIN_EXPERTS = {
    "Plugin-Mean1-MV": "Mean[1]",
    "Plugin-Mean3-MV": "Mean[3]",
    "Plugin-AR1-MV": "AR(1)",
    "Plugin-AR2-MV": "AR(2)",
    "Plugin-AR3-MV": "AR(3)",
}
STRATEGIES = BPS_STRATEGIES + ("Uniform",) + tuple(PLUGIN_EXPERTS)
COV_WINDOW = 36
UNDEFINED = "undefined"


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_rng(seed: int, stream: str, period: int, chain: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream_id(stream), int(period), int(chain)]))


def derive_seed(seed: int, stream: str, period: int, chain: int = 0) -> int:
    ss = np.random.SeedSequence([int(seed), stream_id(stream), int(period), int(chain)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class BacktestConfig:
    """Evaluation window, strategies and per-strategy settings.

    Dates are month-ends of the return panel; ``burn_in_end`` is the last
    month used only for learning.
    """

    burn_in_end: str
    test_start: str
    test_end: str
    strategies: tuple[str, ...] = STRATEGIES
    dlm: DlmConfig = field(default_factory=DlmConfig)
    mv: MvConfig = field(default_factory=MvConfig)
    quantile: QuantileConfig = field(default_factory=QuantileConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    cov_window: int = COV_WINDOW
    risk_free: float = 0.0
    seed: int = 0

    def __post_init__(self):
        strategies = tuple(self.strategies)
        if not strategies:
            raise ConfigError("at least one strategy is required")
        unknown = [s for s in strategies if s not in STRATEGIES]
        if unknown:
            raise ConfigError(f"unknown strategies {unknown}; choose from {list(STRATEGIES)}")
        if len(set(strategies)) != len(strategies):
            raise ConfigError("strategies must not repeat")
        object.__setattr__(self, "strategies", strategies)
        b, s, e = (np.datetime64(str(d)[:10], "D") for d in (self.burn_in_end, self.test_start, self.test_end))
        if not b < s:
            raise ConfigError(f"test_start {self.test_start} must come after burn_in_end {self.burn_in_end}")
        if not s <= e:
            raise ConfigError(f"test_end {self.test_end} precedes test_start {self.test_start}")
        if self.cov_window < 2:
            raise ConfigError("cov_window must be at least 2")

    def test_periods(self, panel: ReturnPanel, allow_next: bool = False) -> range:
        """Panel rows of the test range; ``allow_next`` admits one unobserved month at the end."""
        first = _resolve(panel, self.test_start, allow_next)
        last = _resolve(panel, self.test_end, allow_next)
        burn = _resolve(panel, self.burn_in_end, False)
        if first <= burn:
            raise ConfigError("test range overlaps the burn-in")
        return range(first, last + 1)


def _resolve(panel: ReturnPanel, date, allow_next: bool) -> int:
    target = np.datetime64(str(date)[:10], "D")
    if allow_next and target == panel.date_at(panel.n_periods):
        return panel.n_periods
    try:
        return panel.index_of(target)
    except DataError as exc:
        raise DataError(f"date {date} is outside the return panel") from exc


@dataclass(frozen=True)
class StrategyResult:
    name: str
    dates: np.ndarray
    weights: np.ndarray
    realized: np.ndarray
    cumulative: np.ndarray
    sharpe: float | None
    max_drawdown: float
    diagnostics: tuple[dict, ...]

    @property
    def terminal(self) -> float:
        return float(self.cumulative[-1]) if self.cumulative.size else 0.0


@dataclass(frozen=True)
class BacktestReport:
    assets: tuple[str, ...]
    dates: np.ndarray
    results: dict
    metadata: dict

    def __getitem__(self, name: str) -> StrategyResult:
        return self.results[name]


@dataclass(frozen=True)
class Decision:
    period: int
    weights: np.ndarray
    diagnostics: dict


# ---------------------------------------------------------------- performance

def cumulative_return(realized: Sequence[float]) -> np.ndarray:
    """Compounded cumulative return ``prod(1 + r_s) - 1`` after each period."""
    r = np.asarray(realized, dtype=float)
    if not np.all(np.isfinite(r)):
        raise DataError("realized returns must be finite")
    if np.any(r <= -1.0):
        raise DataError("a return of -100% or worse wipes out the portfolio")
    return np.cumprod(1.0 + r) - 1.0


def sharpe(realized: Sequence[float], risk_free_monthly: float = 0.0) -> float | None:
    """Annualized Sharpe ratio ``mean excess / sample sd * sqrt(12)``; ``None`` when undefined."""
    excess = np.asarray(realized, dtype=float) - risk_free_monthly
    if excess.size < 2:
        return None
    sd = float(excess.std(ddof=1))
    if sd <= 1e-14 * max(1.0, abs(float(excess.mean()))):
        return None
    return float(excess.mean() / sd * math.sqrt(12.0))


def max_drawdown(realized: Sequence[float]) -> float:
    """Largest peak-to-trough fall of the wealth curve, starting from wealth 1."""
    wealth = np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(realized, dtype=float))])
    peak = np.maximum.accumulate(wealth)
    return float(np.max(1.0 - wealth / peak))


# ------------------------------------------------------------------ strategies

def _fallback_corner(mu: np.ndarray) -> np.ndarray:
    w = np.zeros(mu.size)
    w[int(np.argmax(mu))] = 1.0
    return w


def _max_sharpe(m: Moments, config: BacktestConfig, label: str, t: int) -> tuple[np.ndarray, dict]:
    try:
        return max_sharpe_frontier(m, config.mv, config.optimizer), {}
    except InfeasibleError as exc:
        log.warning("%s at period %d: %s; using the max-mean asset", label, t, exc)
        return _fallback_corner(np.asarray(m.mean)), {"fallback": 1}


def _plugin_decisions(name: str, panel: ReturnPanel, bank: ExpertBank, config: BacktestConfig,
                      periods: Sequence[int]) -> Iterator[Decision]:
    j = bank.expert_ids.index(PLUGIN_EXPERTS[name]) if PLUGIN_EXPERTS[name] in bank.expert_ids else None
    if j is None:
        raise DataError(f"{name} needs expert {PLUGIN_EXPERTS[name]} in the bank")
    for t in periods:
        if t < config.cov_window:
            raise DataError(f"{name} at period {t}: fewer than {config.cov_window} months for the covariance")
        mu = bank.at(t)[0][j]
        window = panel.returns[t - config.cov_window:t]
        cov = np.cov(window, rowvar=False, ddof=1)
        w, diag = _max_sharpe(Moments(mu, cov), config, name, t)
        yield Decision(t, w, diag)


def _uniform_decisions(panel: ReturnPanel, periods: Sequence[int]) -> Iterator[Decision]:
    K = panel.n_assets
    for t in periods:
        yield Decision(t, np.full(K, 1.0 / K), {})


def _bps_predictives(panel: ReturnPanel, bank: ExpertBank, config: BacktestConfig,
                     periods: Sequence[int]) -> Iterator[tuple[int, PosteriorPredictive, int]]:
    """Sequential chains over the growing history, each warm-started from the previous date."""
    dlm = config.dlm
    first = bank.start
    state: GibbsState | None = None
    prev_t = None
    for t in periods:
        if t < first:
            raise DataError(f"period {t} precedes the first expert forecast (period {first})")
        data = panel.returns[first:t]
        mean, sd = bank.span(first, t - 1)
        warm = state is not None and prev_t == t - 1
        burn = dlm.warm_burn if warm else dlm.mcmc_burn
        rng = derive_rng(config.seed, "BPS", t, 0)
        try:
            chain = run_gibbs(dlm, data, mean, sd, rng, init=state if warm else None, burn=burn)
        except NumericalError as exc:
            raise NumericalError(f"synthesis chain for {panel.date_at(t)} (period {t}): {exc}") from exc
        mean_next, sd_next = bank.at(t)
        pp = predictive_samples(chain, mean_next, sd_next, dlm, derive_rng(config.seed, "BPS", t, 1), period=t)
        state, prev_t = chain.final, t
        log.info("synthesis chain for %s done (%d periods, %d repairs)", panel.date_at(t), t - first, chain.repairs)
        yield t, pp, chain.repairs


def _bps_decisions(names: Sequence[str], panel: ReturnPanel, bank: ExpertBank, config: BacktestConfig,
                   periods: Sequence[int]) -> Iterator[dict]:
    for t, pp, repairs in _bps_predictives(panel, bank, config, periods):
        out = {}
        m = moments(pp) if ("BPPS-MV" in names or "BPPS-RP" in names) else None
        for name in names:
            diag = {"repairs": repairs}
            if name == "BPPS-MV":
                w, extra = _max_sharpe(m, config, name, t)
                diag.update(extra)
            elif name == "BPPS-VoR":
                opt = replace(config.optimizer, seed=derive_seed(config.seed, name, t))
                w = solve_quantile(pp, config.quantile, opt)
                diag["var_excess"] = max(0.0, var_loss(pp, w, config.quantile.beta) - config.quantile.v0)
            else:
                w = solve_risk_parity(m, config.optimizer)
            out[name] = Decision(t, w, diag)
        yield out


def _group_runs(panel, bank, config, periods) -> list[tuple[tuple[str, ...], Callable[[], dict]]]:
    """Independent work units: the synthesis strategies share one chain per date."""
    groups = []
    bps = tuple(s for s in config.strategies if s in BPS_STRATEGIES)
    if bps:
        def run_bps():
            cols = {name: [] for name in bps}
            for out in _bps_decisions(bps, panel, bank, config, periods):
                for name in bps:
                    cols[name].append(out[name])
            return cols
        groups.append((bps, run_bps))
    for name in config.strategies:
        if name == "Uniform":
            groups.append(((name,), lambda: {"Uniform": list(_uniform_decisions(panel, periods))}))
        elif name in PLUGIN_EXPERTS:
            groups.append(((name,), lambda n=name: {n: list(_plugin_decisions(n, panel, bank, config, periods))}))
    return groups


def decide(panel: ReturnPanel, bank: ExpertBank, config: BacktestConfig, periods: Sequence[int],
           threads: int = 1) -> dict[str, list[Decision]]:
    """Weights of every configured strategy for ``periods`` (consecutive, ascending).

    Only rows before each period are read, so a period may equal
    ``panel.n_periods`` when the bank holds forecasts for it.
    """
    periods = list(periods)
    if any(b != a + 1 for a, b in zip(periods, periods[1:])):
        raise ValueError("decision periods must be consecutive")
    if periods and periods[-1] > panel.n_periods:
        raise DataError("cannot decide beyond the month after the panel end")
    groups = _group_runs(panel, bank, config, periods)
    if threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda g: g[1](), groups))
    else:
        parts = [g[1]() for g in groups]
    merged = {}
    for part in parts:
        merged.update(part)
    return {name: merged[name] for name in config.strategies}


def run_backtest(panel: ReturnPanel, bank: ExpertBank, config: BacktestConfig, threads: int = 1) -> BacktestReport:
    """Decide, realize and score every strategy over the test range."""
    periods = config.test_periods(panel)
    if periods[-1] >= panel.n_periods:
        raise DataError("the test range must end inside the panel so returns can be realized")
    decisions = decide(panel, bank, config, periods, threads)
    dates = panel.dates[periods.start:periods.stop]
    results = {}
    for name, decs in decisions.items():
        W = np.array([d.weights for d in decs])
        realized = np.einsum("tk,tk->t", W, panel.returns[periods.start:periods.stop])
        results[name] = StrategyResult(
            name=name,
            dates=dates,
            weights=W,
            realized=realized,
            cumulative=cumulative_return(realized),
            sharpe=sharpe(realized, config.risk_free),
            max_drawdown=max_drawdown(realized),
            diagnostics=tuple(d.diagnostics for d in decs),
        )
    metadata = {
        "seed": config.seed,
        "code_version": __version__,
        "strategies": list(config.strategies),
        "test_start": str(dates[0]),
        "test_end": str(dates[-1]),
    }
    return BacktestReport(panel.assets, dates, results, metadata)


# --------------------------------------------------------------------- output

def _fmt(v) -> str:
    return UNDEFINED if v is None else repr(float(v))


def write_report(report: BacktestReport, out_dir: str | Path) -> list[Path]:
    """Per-strategy CSVs, ``summary.csv`` and ``curves.csv``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    K = len(report.assets)
    header = ["date"] + [f"weight_{i + 1}" for i in range(K)] + ["realized_return", "cumulative_return"]
    for name, res in report.results.items():
        path = out / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for i, d in enumerate(res.dates):
                cells = [str(d)] + [_fmt(v) for v in res.weights[i]] + [_fmt(res.realized[i]), _fmt(res.cumulative[i])]
                fh.write(",".join(cells) + "\n")
        written.append(path)
    path = out / "summary.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("strategy,terminal_cumulative,sharpe,max_drawdown\n")
        for name, res in report.results.items():
            fh.write(f"{name},{_fmt(res.terminal)},{_fmt(res.sharpe)},{_fmt(res.max_drawdown)}\n")
    written.append(path)
    path = out / "curves.csv"
    names = list(report.results)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["date"] + names) + "\n")
        for i, d in enumerate(report.dates):
            fh.write(",".join([str(d)] + [_fmt(report.results[n].cumulative[i]) for n in names]) + "\n")
    written.append(path)
    return written
