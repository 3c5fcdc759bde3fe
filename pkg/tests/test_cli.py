import hashlib
from pathlib import Path

import pytest
import yaml

import bpps.backtest as bt
from bpps.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, main
from bpps.config import dump_config, load_config, parse_config
from bpps.errors import ConfigError, NumericalError
from bpps.market_data import write_prices
from bpps.synthetic import factor_panel, prices_from_panel

CONFIG = """\
data:
  prices: [prices.csv]
experts: ["Mean[1]", "Mean[3]", "AR(1)"]
dlm:
  mcmc_burn: 15
  mcmc_draws: 20
  warm_burn: 5
backtest:
  burn_in_end: "{burn}"
  test_start: "{start}"
  test_end: "{end}"
  strategies: [{strategies}]
optimizer:
  restarts: 2
output_dir: out
seed: 11
log_level: warn
"""


@pytest.fixture
def workspace(tmp_path):
    panel = factor_panel(3, 44, seed=4)
    write_prices(prices_from_panel(panel), tmp_path / "prices.csv")
    dates = [str(d) for d in panel.dates]

    def make(strategies="Uniform", burn=dates[39], start=dates[40], end=dates[43], name="run.yaml", **extra):
        text = CONFIG.format(strategies=strategies, burn=burn, start=start, end=end)
        for key, value in extra.items():
            text += f"{key}: {value}\n"
        path = tmp_path / name
        path.write_text(text)
        return path

    make.dates = dates
    make.root = tmp_path
    return make


def digests(directory: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


# ---- validate ------------------------------------------------------------------

def test_validate_echoes_resolved_defaults(workspace, capsys):
    assert main(["validate", "--config", str(workspace())]) == EXIT_OK
    out = capsys.readouterr().out
    echoed = yaml.safe_load(out)
    assert echoed["dlm"]["state_discount"] == 0.99
    assert echoed["quantile"] == {"alpha": 0.05, "beta": 0.95, "v0": -0.1, "penalty": 10.0}
    assert "# ok: 3 assets" in out


def test_validate_rejects_test_start_before_burn_in_end(workspace, capsys):
    d = workspace.dates
    path = workspace(burn=d[41], start=d[40])
    assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "test_start" in err and "must come after burn_in_end" in err and "backtest.test_start (line 10)" in err


def test_validate_names_missing_data_file(workspace, capsys):
    (workspace.root / "prices.csv").unlink()
    assert main(["validate", "--config", str(workspace())]) == EXIT_CONFIG
    assert "prices.csv" in capsys.readouterr().err


def test_validate_rejects_too_short_history(workspace, capsys):
    d = workspace.dates
    path = workspace(burn=d[20], start=d[21], end=d[23])
    assert main(["validate", "--config", str(path)]) == EXIT_DATA
    assert "longest expert window" in capsys.readouterr().err


def test_unknown_key_is_line_anchored():
    text = "data:\n  prices: [a.csv]\n  colour: blue\n"
    with pytest.raises(ConfigError, match=r"data\.colour \(line 3\)"):
        parse_config(text)


def test_missing_config_file(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG
    assert "nope.yaml" in capsys.readouterr().err


def test_bad_seed_override(workspace):
    assert main(["validate", "--config", str(workspace()), "--seed", str(2 ** 64)]) == EXIT_CONFIG


# ---- config round trip ------------------------------------------------------------

def test_config_round_trip(workspace):
    cfg = load_config(workspace(strategies="Uniform, BPPS-MV, Plugin-Mean1-MV"))
    again = parse_config(dump_config(cfg), base_dir=cfg.base_dir)
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


# ---- backtest ---------------------------------------------------------------------

def test_uniform_backtest_writes_reports_and_manifest(workspace):
    path = workspace()
    assert main(["backtest", "--config", str(path), "--threads", "1"]) == EXIT_OK
    out = workspace.root / "out"
    assert sorted(p.name for p in out.iterdir()) == ["Uniform.csv", "curves.csv", "manifest.txt", "summary.csv"]
    manifest = (out / "manifest.txt").read_text()
    assert f"config_sha256: {hashlib.sha256(path.read_bytes()).hexdigest()}" in manifest
    assert "seed: 11" in manifest
    assert "strategy Uniform: terminal_cumulative=" in manifest
    for name in ("Uniform.csv", "curves.csv", "summary.csv"):
        assert f"file {name}: sha256=" in manifest


def test_backtest_is_byte_identical_across_runs_and_threads(workspace):
    path = workspace(strategies="BPPS-MV, BPPS-VoR, BPPS-RP, Uniform, Plugin-AR1-MV")
    runs = []
    for i, threads in enumerate(("1", "1", "4")):
        out = workspace.root / f"out{i}"
        assert main(["backtest", "--config", str(path), "--out", str(out), "--threads", threads]) == EXIT_OK
        runs.append(digests(out))
    assert runs[0] == runs[1] == runs[2]
    assert len(runs[0]) == 8


def test_seed_override_changes_synthesis_output(workspace):
    path = workspace(strategies="BPPS-MV")
    a, b = workspace.root / "a", workspace.root / "b"
    main(["backtest", "--config", str(path), "--out", str(a)])
    main(["backtest", "--config", str(path), "--out", str(b), "--seed", "12"])
    assert (a / "BPPS-MV.csv").read_bytes() != (b / "BPPS-MV.csv").read_bytes()
    assert "seed: 12" in (b / "manifest.txt").read_text()


# ---- diagnose ----------------------------------------------------------------------

def test_diagnose_writes_trace_and_repairs(workspace):
    date = workspace.dates[41]
    assert main(["diagnose", "--config", str(workspace()), "--date", date]) == EXIT_OK
    out = workspace.root / "out"
    trace = (out / f"trace_{date}.csv").read_text().splitlines()
    header = trace[0].split(",")
    K, J = 3, 3
    assert len(header) == K * (J + 1) + 1
    assert header[:3] == ["sweep", "beta_A01_intercept", "beta_A01_Mean[1]"]
    assert len(trace) - 1 == 15 + 20
    repairs = (out / f"repairs_{date}.csv").read_text().splitlines()
    assert repairs[0] == "sweep,phase,repairs"
    assert len(repairs) - 1 == 35
    assert repairs[1].split(",")[1] == "burn" and repairs[-1].split(",")[1] == "draw"


def test_diagnose_rejects_burn_in_date(workspace, capsys):
    assert main(["diagnose", "--config", str(workspace()), "--date", workspace.dates[38]]) == EXIT_CONFIG
    assert "outside the test range" in capsys.readouterr().err


# ---- exit-code contract ---------------------------------------------------------------

def test_exit_code_for_bad_prices(workspace, capsys):
    (workspace.root / "prices.csv").write_text("date,asset,price\n2010-01-31,A,-5\n")
    assert main(["validate", "--config", str(workspace())]) == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_exit_code_for_numerical_failure(workspace, monkeypatch, capsys):
    def fail(*args, **kwargs):
        raise NumericalError("non-finite beta in Gibbs sweep 3")

    monkeypatch.setattr(bt, "run_gibbs", fail)
    path = workspace(strategies="BPPS-MV")
    assert main(["backtest", "--config", str(path)]) == EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "sweep 3" in err and workspace.dates[40] in err


def test_threads_must_be_positive(workspace):
    with pytest.raises(SystemExit):
        main(["backtest", "--config", str(workspace()), "--threads", "0"])
