import sys

import numpy as np
import pytest

from ueekit import synth
from ueekit.detect import detect_all
from ueekit.ingest import TradeStream
from ueekit.quotes import analyze_event

SUITE_SEED = 20210104


@pytest.fixture(scope="session")
def suite():
    """Standard fixture corpus, generated once per session."""
    return synth.fixture_suite(SUITE_SEED)


@pytest.fixture(scope="session")
def suite_dir(suite, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    synth.write_corpus(suite, out)
    return out


def make_stream(prices, times=None, volumes=None, *, spacing_ns=1_000_000, start=10 * 3600 * 10**9,
                symbol="TST", date="2021-01-04"):
    prices = np.asarray(prices, dtype=np.float64)
    if times is None:
        times = start + spacing_ns * np.arange(len(prices), dtype=np.int64)
    return TradeStream.from_arrays(times, prices, volumes, symbol=symbol, date=date)


@pytest.fixture(scope="session")
def suite_events(suite):
    """Detections on the fixture corpus under both criteria."""
    return {label: detect_all(suite.trade_streams(), crit) for label, crit in synth.CRITERIA.items()}


@pytest.fixture(scope="session")
def suite_analytics(suite, suite_events):
    trades, quotes = suite.trade_streams(), suite.quote_streams()
    return [analyze_event(e, trades[(e.symbol, e.date)], quotes[(e.symbol, e.date)])
            for e in suite_events["1.5s"]]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
