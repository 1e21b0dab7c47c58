import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_stream
from ueekit.bruteforce import enumerate_events, enumerate_runs, enumerate_stream
from ueekit.detect import (
    DEFAULT_CRITERIA,
    TWO_SECOND_CRITERIA,
    DetectionCriteria,
    Direction,
    UeeEvent,
    detect_all,
    detect_events,
    format_duration,
    monotonic_runs,
    parse_duration,
    uee_return,
)
from ueekit.synth import stress_stream

MS = 1_000_000
SEC = 1_000_000_000

# 12 trades falling 100.00 -> 99.10; the drop first exceeds 0.8% at the 11th trade
CRASH_12 = [100.00, 99.92, 99.84, 99.76, 99.68, 99.60, 99.52, 99.44, 99.36, 99.28, 99.15, 99.10]


def spread_times(n, total_ns, start=10 * 3600 * SEC):
    return start + np.linspace(0, total_ns, n).astype(np.int64)


def as_tuples(events):
    return [(e.start_index, e.change_index, e.end_index, e.direction.sign) for e in events]


class TestMonotonicRuns:
    def test_flat_has_no_runs(self):
        assert monotonic_runs(make_stream([100, 100, 100])) == []

    def test_turning_point_shared(self):
        runs = monotonic_runs(make_stream([100, 99, 98, 99]))
        assert [(r.direction, r.first, r.last) for r in runs] == [
            (Direction.FLASH_CRASH, 0, 2), (Direction.FLASH_SPIKE, 2, 3)]

    def test_plateau_belongs_to_both_runs(self):
        runs = monotonic_runs(make_stream([100, 101, 101, 100]))
        assert [(r.first, r.last) for r in runs] == [(0, 2), (1, 3)]

    def test_strict_mode_breaks_on_repeats(self):
        runs = monotonic_runs(make_stream([100, 99, 99, 98]), strict=True)
        assert [(r.first, r.last) for r in runs] == [(0, 1), (2, 3)]

    def test_short_streams(self):
        assert monotonic_runs(make_stream([])) == []
        assert monotonic_runs(make_stream([5.0])) == []

    def test_cumulative_returns(self):
        r, = monotonic_runs(make_stream([100, 99, 98]))
        np.testing.assert_allclose(r.cumulative_returns, [0, -0.01, -0.02])

    def test_random_walk_matches_enumerator(self):
        rng = np.random.default_rng(3)
        prices = np.round(100 + np.cumsum(rng.choice([-0.01, 0, 0.01], 10_000)), 2)
        got = [(r.first, r.last, r.direction.sign) for r in monotonic_runs(make_stream(prices))]
        assert got == enumerate_runs(prices)


class TestDetectExamples:
    def test_twelve_trade_crash(self):
        s = make_stream(CRASH_12, spread_times(12, 1 * SEC))
        e, = detect_events(s)
        assert e.direction is Direction.FLASH_CRASH
        assert (e.s_start, e.s_end) == (100.00, 99.10)
        assert (e.start_index, e.change_index, e.end_index) == (0, 10, 11)
        assert e.t_change == s.timestamp[10]
        assert e.trade_count == 11 and e.trade_count_end == 12
        assert as_tuples([e]) == enumerate_stream(s, DEFAULT_CRITERIA)

    def test_ten_trades_no_event(self):
        prices = [100.00, 99.90, 99.80, 99.70, 99.60, 99.50, 99.40, 99.30, 99.20, 99.10]
        s = make_stream(prices, spread_times(10, 1 * SEC))
        assert detect_events(s) == []
        assert detect_events(s, TWO_SECOND_CRITERIA) == []

    def test_stretched_over_1_6_seconds(self):
        s = make_stream(CRASH_12, spread_times(12, 1600 * MS))
        assert detect_events(s, DEFAULT_CRITERIA) == []
        e, = detect_events(s, TWO_SECOND_CRITERIA)
        assert e.change_index == 10
        assert enumerate_stream(s, DEFAULT_CRITERIA) == []
        assert as_tuples([e]) == enumerate_stream(s, TWO_SECOND_CRITERIA)

    def test_min_trades_delays_change(self):
        # threshold crossed at the 4th trade, but t_change waits for the 11th
        prices = [100, 99.5, 99.3, 99.1] + [99.1 - 0.01 * k for k in range(1, 9)]
        e, = detect_events(make_stream(prices))
        assert e.change_index == 10

    def test_spike(self):
        prices = [200 * (1 + 0.0009 * k) for k in range(15)]
        e, = detect_events(make_stream(prices))
        assert e.direction is Direction.FLASH_SPIKE and e.r_uee > 0.008

    def test_exactly_threshold_is_not_enough(self):
        prices = [100.0] + [100.0 - 0.8 * k / 10 for k in range(1, 11)] + [99.2]
        assert max(abs(p - 100) / 100 for p in prices) == pytest.approx(0.008)
        ev = detect_events(make_stream(prices))
        assert all(abs(e.s_change - e.s_start) / e.s_start > 0.008 for e in ev)
        assert as_tuples(ev) == enumerate_stream(make_stream(prices), DEFAULT_CRITERIA)

    def test_crash_then_spike_share_trade(self):
        down = [100 * (1 - 0.001 * k) for k in range(12)]
        up = [down[-1] * (1 + 0.001 * k) for k in range(1, 12)]
        a, b = detect_events(make_stream(down + up))
        assert a.direction is Direction.FLASH_CRASH and b.direction is Direction.FLASH_SPIKE
        assert a.end_index == b.start_index == 11

    def test_long_run_excluded_entirely(self):
        # 11 trades crossing quickly, then the trend continues past 1.5 s
        t = np.concatenate([spread_times(11, 500 * MS), 10 * 3600 * SEC + np.array([1600 * MS])])
        prices = [100 * (1 - 0.001 * k) for k in range(12)]
        assert detect_events(make_stream(prices, t)) == []

    def test_timestamp_ties_are_distinct_trades(self):
        t = np.full(12, 10 * 3600 * SEC, dtype=np.int64)
        e, = detect_events(make_stream(CRASH_12, t))
        assert e.trade_count == 11 and e.duration == 0

    def test_strict_flag(self):
        prices = list(CRASH_12)
        prices.insert(5, prices[4])  # a repeated price inside the run
        s = make_stream(prices, spread_times(13, 1 * SEC))
        assert len(detect_events(s)) == 1
        assert detect_events(s, DetectionCriteria(strict=True)) == []


def test_uee_return():
    mk = lambda a, b: UeeEvent("X", "d", Direction.from_sign(int(np.sign(b - a))), 0, 1, 1, a, b, b, 0, 1, 1)  # noqa: E731
    assert uee_return(mk(100, 99.1)) == pytest.approx(-0.009, abs=1e-15)
    assert uee_return(mk(200, 201.8)) == pytest.approx(0.009, abs=1e-15)


class TestCriteria:
    @pytest.mark.parametrize("kw", [dict(threshold=0), dict(threshold=-0.1), dict(min_trades=1),
                                    dict(max_duration=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            DetectionCriteria(**kw)

    @pytest.mark.parametrize("text, ns", [("1.5s", 1_500_000_000), ("2.0s", 2_000_000_000),
                                          ("1500ms", 1_500_000_000), (2, 2_000_000_000), ("250us", 250_000)])
    def test_parse_duration(self, text, ns):
        assert parse_duration(text) == ns

    def test_labels(self):
        assert DEFAULT_CRITERIA.label == "1.5s" and TWO_SECOND_CRITERIA.label == "2.0s"
        assert format_duration(1_234) == "1234ns"

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            parse_duration("soon")


price_paths = st.lists(st.integers(-3, 3), min_size=0, max_size=80).map(
    lambda steps: np.round(10 + 0.01 * np.cumsum([0] + steps), 2))


@settings(max_examples=300, deadline=None)
@given(price_paths, st.integers(1, 400), st.integers(2, 14), st.sampled_from([0.001, 0.004, 0.008]),
       st.booleans())
def test_detector_equals_enumerator(prices, gap_ms, min_trades, threshold, strict):
    crit = DetectionCriteria(threshold, min_trades, 1_500_000_000, strict)
    s = make_stream(prices, spacing_ns=gap_ms * MS // 10)
    assert as_tuples(detect_events(s, crit)) == enumerate_stream(s, crit)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_event_invariants(seed):
    s = stress_stream(seed, max_len=600)
    for e in detect_events(s):
        p = s.price[e.start_index: e.end_index + 1]
        d = np.diff(p)
        if e.direction is Direction.FLASH_CRASH:
            assert e.s_end < e.s_start and np.all(d <= 0)
        else:
            assert e.s_end > e.s_start and np.all(d >= 0)
        moved = np.abs(s.price[e.start_index: e.change_index + 1] - e.s_start) / e.s_start
        assert moved[-1] > 0.008 and not np.any(moved[:-1][np.arange(len(moved) - 1) >= 10] > 0.008)
        assert e.trade_count >= 11 and e.duration < DEFAULT_CRITERIA.max_duration
        assert e.t_start <= e.t_change <= e.t_end


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_subset_under_longer_duration(seed):
    s = stress_stream(seed, max_len=800)
    assert set(detect_events(s, DEFAULT_CRITERIA)) <= set(detect_events(s, TWO_SECOND_CRITERIA))


def test_deterministic_and_detect_all():
    streams = {(f"R{k}", "2021-01-04"): stress_stream(k, 2000) for k in range(3)}
    a = detect_all(streams)
    assert a == detect_all(streams)
    assert a == [e for key in sorted(streams) for e in detect_events(streams[key])]


def test_enumerator_direct_example():
    t = list(spread_times(12, 1 * SEC))
    assert enumerate_events(t, CRASH_12) == [(0, 10, 11, -1)]
