"""YAML run configuration: schema, defaults, validation with line numbers, round-trip.

Example
-------
.. code-block:: yaml

    data:
      prices: [prices.csv]        # paths relative to this file
      return_method: simple
    experts: ["Mean[1]", "Mean[3]", "AR(1)", "AR(2)", "AR(3)"]
    dlm: {state_discount: 0.99, vol_discount: 0.95, mcmc_burn: 2000, mcmc_draws: 3000}
    backtest:
      burn_in_end: "2010-12-31"
      test_start: "2011-01-31"
      test_end: "2019-12-31"
      strategies: [BPPS-MV, BPPS-VoR, BPPS-RP, Uniform]
    output_dir: out
    seed: 0

Every section is optional except ``data`` and ``backtest``; omitted keys
take the documented defaults, and ``dump_config`` writes them all out.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from bpps.backtest import COV_WINDOW, PLUGIN_EXPERTS, STRATEGIES, BacktestConfig
from bpps.bps.dlm import DlmConfig
from bpps.errors import BppsError, ConfigError
from bpps.experts import DEFAULT_EXPERTS, ExpertSpec
from bpps.market_data import RETURN_METHODS
from bpps.portfolio import MvConfig, OptimizerConfig, QuantileConfig

LOG_LEVELS = ("error", "warn", "info", "debug")
DLM_KEYS = ("state_discount", "vol_discount", "prior_dof", "prior_scale", "prior_cov_scale",
            "mcmc_burn", "mcmc_draws", "warm_burn")
MV_KEYS = ("risk_free", "n_grid")
QUANTILE_KEYS = ("alpha", "beta", "v0", "penalty")
OPTIMIZER_KEYS = ("max_iters", "step_tol", "obj_tol", "restarts", "kkt_tol")
TOP_KEYS = ("data", "experts", "dlm", "backtest", "mv", "quantile", "optimizer", "output_dir",
            "seed", "log_level")


@dataclass(frozen=True)
class RunConfig:
    prices: tuple[str, ...]
    burn_in_end: str
    test_start: str
    test_end: str
    return_method: str = "simple"
    experts: tuple[str, ...] = DEFAULT_EXPERTS
    strategies: tuple[str, ...] = STRATEGIES
    cov_window: int = COV_WINDOW
    risk_free: float = 0.0
    dlm: DlmConfig = field(default_factory=DlmConfig)
    mv: MvConfig = field(default_factory=MvConfig)
    quantile: QuantileConfig = field(default_factory=QuantileConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output_dir: str = "out"
    seed: int = 0
    log_level: str = "info"
    base_dir: str = field(default=".", compare=False)

    def price_paths(self) -> list[Path]:
        return [Path(self.base_dir, p) for p in self.prices]

    def out_path(self) -> Path:
        return Path(self.base_dir, self.output_dir)

    def backtest_config(self) -> BacktestConfig:
        return BacktestConfig(
            burn_in_end=self.burn_in_end,
            test_start=self.test_start,
            test_end=self.test_end,
            strategies=self.strategies,
            dlm=self.dlm.with_(seed=self.seed),
            mv=self.mv,
            quantile=self.quantile,
            optimizer=self.optimizer,
            cov_window=self.cov_window,
            risk_free=self.risk_free,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        """Plain nested mapping with every default resolved."""
        return {
            "data": {"prices": list(self.prices), "return_method": self.return_method},
            "experts": list(self.experts),
            "dlm": {k: getattr(self.dlm, k) for k in DLM_KEYS},
            "backtest": {
                "burn_in_end": self.burn_in_end,
                "test_start": self.test_start,
                "test_end": self.test_end,
                "strategies": list(self.strategies),
                "cov_window": self.cov_window,
                "risk_free": self.risk_free,
            },
            "mv": {"risk_free": self.mv.risk_free, "n_grid": self.mv.n_grid},
            "quantile": {k: getattr(self.quantile, k) for k in QUANTILE_KEYS},
            "optimizer": {k: getattr(self.optimizer, k) for k in OPTIMIZER_KEYS},
            "output_dir": self.output_dir,
            "seed": self.seed,
            "log_level": self.log_level,
        }


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False)


# ------------------------------------------------------------------ parsing

class _Lines:
    """Maps key paths such as ``("backtest", "test_start")`` to 1-based source lines."""

    def __init__(self, node):
        self.lines: dict[tuple, int] = {}
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                sub = path + (key.value,)
                self._walk(value, sub)
                # report the key's line rather than where its value starts
                self.lines[sub] = key.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                self._walk(item, path + (i,))

    def where(self, path: tuple) -> str:
        while path and path not in self.lines:
            path = path[:-1]
        line = self.lines.get(path)
        label = ".".join(str(p) for p in path) or "<root>"
        return f"{label} (line {line})" if line else label


def _fail(lines: _Lines, path: tuple, message: str):
    raise ConfigError(f"{lines.where(path)}: {message}")


def _section(raw: dict, key: str, lines: _Lines, allowed: tuple, required: bool = False) -> dict:
    value = raw.get(key)
    if value is None:
        if required:
            _fail(lines, (), f"missing required section '{key}'")
        return {}
    if not isinstance(value, dict):
        _fail(lines, (key,), "expected a mapping")
    for k in value:
        if k not in allowed:
            _fail(lines, (key, k), f"unknown key; allowed: {', '.join(allowed)}")
    return value


def _date(value, lines, path) -> str:
    if isinstance(value, dt.datetime):
        value = value.date()
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value).isoformat()
        except ValueError:
            pass
    _fail(lines, path, f"expected a YYYY-MM-DD date, got {value!r}")


def _number(value, lines, path, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(lines, path, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            _fail(lines, path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _str_list(value, lines, path) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        _fail(lines, path, "expected a list of strings")
    return tuple(value)


_INT_FIELDS = {"mcmc_burn", "mcmc_draws", "warm_burn", "n_grid", "max_iters", "restarts", "cov_window", "seed"}


def _typed(section: dict, name: str, lines: _Lines) -> dict:
    return {k: _number(v, lines, (name, k), int if k in _INT_FIELDS else float) for k, v in section.items()}


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    """Parse and schema-check a YAML document; errors carry key paths and line numbers."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML syntax error: {exc}") from exc
    lines = _Lines(node)
    if not isinstance(raw, dict):
        _fail(lines, (), "top level must be a mapping")
    for k in raw:
        if k not in TOP_KEYS:
            _fail(lines, (k,), f"unknown key; allowed: {', '.join(TOP_KEYS)}")

    data = _section(raw, "data", lines, ("prices", "return_method"), required=True)
    if "prices" not in data:
        _fail(lines, ("data",), "missing 'prices'")
    prices = _str_list(data["prices"], lines, ("data", "prices"))
    if not prices:
        _fail(lines, ("data", "prices"), "at least one price file is required")
    method = data.get("return_method", "simple")
    if method not in RETURN_METHODS:
        _fail(lines, ("data", "return_method"), f"must be one of {RETURN_METHODS}")

    experts = _str_list(raw.get("experts", list(DEFAULT_EXPERTS)), lines, ("experts",))
    for i, e in enumerate(experts):
        try:
            ExpertSpec.parse(e)
        except (ValueError, BppsError) as exc:
            _fail(lines, ("experts", i), str(exc))
    if not experts:
        _fail(lines, ("experts",), "at least one expert is required")

    bt = _section(raw, "backtest", lines, ("burn_in_end", "test_start", "test_end", "strategies",
                                           "cov_window", "risk_free"), required=True)
    for k in ("burn_in_end", "test_start", "test_end"):
        if k not in bt:
            _fail(lines, ("backtest",), f"missing '{k}'")
    dates = {k: _date(bt[k], lines, ("backtest", k)) for k in ("burn_in_end", "test_start", "test_end")}
    if not dates["burn_in_end"] < dates["test_start"]:
        _fail(lines, ("backtest", "test_start"),
              f"test_start {dates['test_start']} must come after burn_in_end {dates['burn_in_end']}")
    if not dates["test_start"] <= dates["test_end"]:
        _fail(lines, ("backtest", "test_end"), "test_end precedes test_start")
    strategies = _str_list(bt.get("strategies", list(STRATEGIES)), lines, ("backtest", "strategies"))
    for i, s in enumerate(strategies):
        if s not in STRATEGIES:
            _fail(lines, ("backtest", "strategies", i), f"unknown strategy {s!r}; choose from {list(STRATEGIES)}")
        if s in PLUGIN_EXPERTS and PLUGIN_EXPERTS[s] not in experts:
            _fail(lines, ("backtest", "strategies", i), f"{s} needs expert {PLUGIN_EXPERTS[s]} in 'experts'")
    if not strategies or len(set(strategies)) != len(strategies):
        _fail(lines, ("backtest", "strategies"), "strategies must be nonempty and distinct")
    cov_window = _number(bt.get("cov_window", COV_WINDOW), lines, ("backtest", "cov_window"), int)
    risk_free = _number(bt.get("risk_free", 0.0), lines, ("backtest", "risk_free"))

    seed = _number(raw.get("seed", 0), lines, ("seed",), int)
    if not 0 <= seed < 2 ** 64:
        _fail(lines, ("seed",), "seed must be an unsigned 64-bit integer")
    log_level = raw.get("log_level", "info")
    if log_level not in LOG_LEVELS:
        _fail(lines, ("log_level",), f"must be one of {LOG_LEVELS}")
    output_dir = raw.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        _fail(lines, ("output_dir",), "expected a directory path")

    sub = {}
    for name, keys, cls in (("dlm", DLM_KEYS, DlmConfig), ("mv", MV_KEYS, MvConfig),
                            ("quantile", QUANTILE_KEYS, QuantileConfig),
                            ("optimizer", OPTIMIZER_KEYS, OptimizerConfig)):
        values = _typed(_section(raw, name, lines, keys), name, lines)
        try:
            sub[name] = cls(**values)
        except (ValueError, BppsError) as exc:
            _fail(lines, (name,), str(exc))

    try:
        return RunConfig(prices=prices, return_method=method, experts=experts, strategies=strategies,
                         cov_window=cov_window, risk_free=risk_free, output_dir=output_dir, seed=seed,
                         log_level=log_level, base_dir=str(base_dir), **dates, **sub)
    except (ValueError, BppsError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        return parse_config(text, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def check_files(cfg: RunConfig, text: str | None = None) -> None:
    """Fail with the offending path when a referenced data file is missing."""
    lines = _Lines(yaml.compose(text, Loader=yaml.SafeLoader)) if text else _Lines(None)
    for i, path in enumerate(cfg.price_paths()):
        if not path.is_file():
            _fail(lines, ("data", "prices", i), f"data file not found: {path}")

