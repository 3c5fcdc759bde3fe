import numpy as np
import pytest

from bpps.market_data import PriceSeries, ReturnPanel
from bpps.synthetic import month_ends


def make_series(asset, start, prices):
    return PriceSeries(asset, month_ends(start, len(prices)), np.asarray(prices, dtype=float))


def make_panel(returns, start="2008-01-31", assets=None):
    returns = np.asarray(returns, dtype=float)
    assets = assets or tuple(f"A{i + 1}" for i in range(returns.shape[1]))
    return ReturnPanel(month_ends(start, returns.shape[0]), assets, returns)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
