"""Command-line entry point: ``validate``, ``backtest`` and ``diagnose``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from bpps import __version__
from bpps.backtest import BacktestReport, derive_rng, run_backtest, write_report
from bpps.bps.gibbs import run_gibbs
from bpps.config import LOG_LEVELS, RunConfig, check_files, dump_config, load_config
from bpps.errors import ConfigError, DataError, InfeasibleError, NumericalError
from bpps.experts import ExpertBank, ExpertSpec, build_bank
from bpps.market_data import ReturnPanel, align_panel, read_prices

log = logging.getLogger("bpps")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _load(args) -> tuple[RunConfig, str]:
    cfg = load_config(args.config)
    text = Path(args.config).read_text(encoding="utf-8")
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = str(Path(args.out).resolve())
    if args.log_level is not None:
        changes["log_level"] = args.log_level
    cfg = replace(cfg, **changes)
    check_files(cfg, text)
    return cfg, text


def _setup_logging(level: str) -> None:
    logging.basicConfig(level=_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", force=True)


def load_data(cfg: RunConfig) -> tuple[ReturnPanel, ExpertBank]:
    """Return panel from the configured price files and the expert bank.

    The bank starts as soon as the longest expert window allows, so the
    synthesis model also learns from burn-in months with forecasts.
    """
    panel = align_panel(read_prices(cfg.price_paths()), cfg.return_method)
    bt = cfg.backtest_config()
    periods = bt.test_periods(panel)
    longest = max(ExpertSpec.parse(e).window for e in cfg.experts)
    if periods.start < longest:
        raise DataError(f"test_start {cfg.test_start} leaves {periods.start} months of history; "
                        f"the longest expert window needs {longest}")
    if any(s.startswith("Plugin") for s in cfg.strategies) and periods.start < cfg.cov_window:
        raise DataError(f"test_start {cfg.test_start} leaves {periods.start} months of history; "
                        f"plug-in covariances need {cfg.cov_window}")
    bank = build_bank(panel, cfg.experts, start=longest, end=periods.stop - 1)
    return panel, bank


def cmd_validate(args) -> int:
    cfg, _ = _load(args)
    _setup_logging(cfg.log_level)
    panel, bank = load_data(cfg)
    periods = cfg.backtest_config().test_periods(panel)
    sys.stdout.write(dump_config(cfg))
    sys.stdout.write(f"# ok: {panel.n_assets} assets, {panel.n_periods} months, "
                     f"{len(periods)} test dates, {bank.n_experts} experts\n")
    return EXIT_OK


def _manifest(cfg: RunConfig, text: str, report: BacktestReport, files: list[Path]) -> str:
    lines = [
        f"code_version: {__version__}",
        f"config_sha256: {hashlib.sha256(text.encode('utf-8')).hexdigest()}",
        f"seed: {cfg.seed}",
        f"test_start: {report.metadata['test_start']}",
        f"test_end: {report.metadata['test_end']}",
    ]
    for name, res in report.results.items():
        sharpe = "undefined" if res.sharpe is None else repr(res.sharpe)
        repairs = sum(d.get("repairs", 0) for d in res.diagnostics)
        fallbacks = sum(d.get("fallback", 0) for d in res.diagnostics)
        lines.append(f"strategy {name}: terminal_cumulative={res.terminal!r} sharpe={sharpe} "
                     f"max_drawdown={res.max_drawdown!r} repairs={repairs} fallbacks={fallbacks}")
    for path in files:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        lines.append(f"file {path.name}: sha256={digest}")
    return "\n".join(lines) + "\n"


def cmd_backtest(args) -> int:
    cfg, text = _load(args)
    _setup_logging(cfg.log_level)
    panel, bank = load_data(cfg)
    threads = args.threads or os.cpu_count() or 1
    report = run_backtest(panel, bank, cfg.backtest_config(), threads=threads)
    out = cfg.out_path()
    files = write_report(report, out)
    (out / "manifest.txt").write_text(_manifest(cfg, text, report, files), encoding="utf-8")
    log.info("wrote %d report files to %s", len(files) + 1, out)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    """Cold-started chain for one test date; writes the coefficient trace and per-sweep repairs."""
    cfg, _ = _load(args)
    _setup_logging(cfg.log_level)
    panel, bank = load_data(cfg)
    bt = cfg.backtest_config()
    periods = bt.test_periods(panel)
    try:
        t = panel.index_of(args.date)
    except DataError as exc:
        raise ConfigError(f"--date {args.date}: {exc}") from exc
    if t not in periods:
        raise ConfigError(f"--date {args.date} is outside the test range "
                          f"{panel.date_at(periods.start)} .. {panel.date_at(periods.stop - 1)}")
    data = panel.returns[bank.start:t]
    mean, sd = bank.span(bank.start, t - 1)
    chain = run_gibbs(bt.dlm, data, mean, sd, derive_rng(cfg.seed, "BPS", t, 0))
    out = cfg.out_path()
    out.mkdir(parents=True, exist_ok=True)
    date = str(panel.date_at(t))
    names = [f"beta_{a}_{i}" for a in panel.assets for i in ["intercept", *bank.expert_ids]]
    trace = out / f"trace_{date}.csv"
    with open(trace, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["sweep", *names]) + "\n")
        for s, row in enumerate(chain.trace):
            fh.write(",".join([str(s), *(repr(float(v)) for v in row)]) + "\n")
    repairs = out / f"repairs_{date}.csv"
    with open(repairs, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sweep,phase,repairs\n")
        for s, r in enumerate(chain.sweep_repairs):
            fh.write(f"{s},{'burn' if s < chain.burn else 'draw'},{int(r)}\n")
    log.info("wrote %s and %s", trace, repairs)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, metavar="U64", help="top-level seed (overrides seed)")
    common.add_argument("--threads", type=int, metavar="N", default=None,
                        help="worker threads; default = available cores")
    common.add_argument("--log-level", choices=LOG_LEVELS, default=None)

    parser = argparse.ArgumentParser(prog="bpps", description="Synthesis-based portfolio backtests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", parents=[common], help="check a configuration and its data")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("backtest", parents=[common], help="run the backtest and write reports")
    p.set_defaults(func=cmd_backtest)
    p = sub.add_parser("diagnose", parents=[common], help="dump an MCMC trace for one test date")
    p.add_argument("--date", required=True, help="test month (YYYY-MM-DD)")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, InfeasibleError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
