"""Monotonic-run scanning and UEE classification.

A UEE is a maximal monotonic run of trade prices whose cumulative return
from the run's first trade exceeds ``threshold`` at a trade that is at least
the ``min_trades``-th trade of the run, with the whole run lasting less
than ``max_duration``.  Runs are found with vectorised block detection on
price differences, so a day of millions of trades scans in milliseconds.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

import numpy as np

from .ingest import NS_PER_SECOND, TradeStream


class Direction(str, enum.Enum):
    FLASH_CRASH = "crash"
    FLASH_SPIKE = "spike"

    @property
    def sign(self) -> int:
        return -1 if self is Direction.FLASH_CRASH else 1

    @classmethod
    def from_sign(cls, sign: int) -> Direction:
        return cls.FLASH_CRASH if sign < 0 else cls.FLASH_SPIKE


_DURATION_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*(ns|us|ms|s)?\s*$")
_UNIT_NS = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": NS_PER_SECOND, None: NS_PER_SECOND}


def parse_duration(text) -> int:
    """``"1.5s"``, ``"2.0s"``, ``"1500ms"`` or a bare number of seconds -> ns."""
    if isinstance(text, (int, float)):
        return int(round(float(text) * NS_PER_SECOND))
    m = _DURATION_RE.match(str(text))
    if not m:
        raise ValueError(f"bad duration {text!r}")
    value, unit = m.groups()
    return int(round(float(value) * _UNIT_NS[unit]))


def format_duration(ns: int) -> str:
    secs = ns / NS_PER_SECOND
    return f"{secs:.1f}s" if ns % (NS_PER_SECOND // 10) == 0 else f"{ns}ns"


@dataclass(frozen=True)
class DetectionCriteria:
    threshold: float = 0.008
    min_trades: int = 11
    max_duration: int = 1_500_000_000
    strict: bool = False

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.min_trades < 2:
            raise ValueError("min_trades must be at least 2")
        if self.max_duration <= 0:
            raise ValueError("max_duration must be positive")

    @property
    def label(self) -> str:
        return format_duration(self.max_duration)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "min_trades": self.min_trades,
            "max_duration_ns": self.max_duration,
            "strict": self.strict,
        }


DEFAULT_CRITERIA = DetectionCriteria()
TWO_SECOND_CRITERIA = DetectionCriteria(max_duration=2 * NS_PER_SECOND)


@dataclass(frozen=True)
class UeeEvent:
    """One detected event; indices point into the symbol-day trade stream."""

    symbol: str
    date: str
    direction: Direction
    start_index: int
    change_index: int
    end_index: int
    s_start: float
    s_change: float
    s_end: float
    t_start: int
    t_change: int
    t_end: int

    @property
    def trade_count(self) -> int:
        """Trades from the run start through ``t_change``, inclusive."""
        return self.change_index - self.start_index + 1

    @property
    def trade_count_end(self) -> int:
        return self.end_index - self.start_index + 1

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    @property
    def r_uee(self) -> float:
        return uee_return(self)

    @property
    def event_id(self) -> str:
        return f"{self.symbol}|{self.date}|{self.start_index}|{self.direction.value}"


def uee_return(event: UeeEvent) -> float:
    """Relative price deviation ``(S_end - S_start) / S_start``."""
    return (event.s_end - event.s_start) / event.s_start


@dataclass(frozen=True)
class MonotonicRun:
    direction: Direction
    first: int
    last: int
    prices: np.ndarray

    @property
    def length(self) -> int:
        return self.last - self.first + 1

    @property
    def cumulative_returns(self) -> np.ndarray:
        p = self.prices[self.first: self.last + 1]
        return (p - p[0]) / p[0]


def _blocks(mask: np.ndarray):
    """Start/end (inclusive) positions of maximal True blocks."""
    if not len(mask):
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    m = np.concatenate([[False], mask, [False]]).view(np.int8)
    edges = np.diff(m)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return starts, ends


def run_bounds(prices: np.ndarray, strict: bool = False):
    """Maximal monotonic runs as index arrays.

    Returns ``(first, last, sign)`` where runs are maximal non-increasing
    (sign -1) or non-decreasing (sign +1) intervals with a nonzero net
    change.  With ``strict`` a repeated price ends a run.
    """
    p = np.asarray(prices, dtype=np.float64)
    if len(p) < 2:
        empty = np.zeros(0, np.int64)
        return empty, empty, empty
    d = np.diff(p)
    out = []
    for sign in (-1, 1):
        if strict:
            mask = d < 0 if sign < 0 else d > 0
        else:
            mask = d <= 0 if sign < 0 else d >= 0
        a, b = _blocks(mask)
        first, last = a, b + 1
        moving = p[last] != p[first]
        out.append((first[moving], last[moving], np.full(int(moving.sum()), sign, np.int64)))
    first = np.concatenate([o[0] for o in out])
    last = np.concatenate([o[1] for o in out])
    sign = np.concatenate([o[2] for o in out])
    order = np.lexsort((sign, first))
    return first[order], last[order], sign[order]


def monotonic_runs(trades: TradeStream, strict: bool = False) -> list[MonotonicRun]:
    """All maximal monotonic runs with a net price change.

    A turning-point trade belongs to both the run it ends and the run it
    begins; so does every trade of a flat stretch between two runs.
    """
    first, last, sign = run_bounds(trades.price, strict)
    return [
        MonotonicRun(Direction.from_sign(s), int(a), int(b), trades.price)
        for a, b, s in zip(first.tolist(), last.tolist(), sign.tolist())
    ]


def detect_indices(timestamps, prices, criteria: DetectionCriteria = DEFAULT_CRITERIA):
    """Array-level detector: ``(start, change, end, sign)`` index arrays."""
    t = np.asarray(timestamps, dtype=np.int64)
    p = np.asarray(prices, dtype=np.float64)
    first, last, sign = run_bounds(p, criteria.strict)
    empty = np.zeros(0, np.int64)
    if len(first) == 0:
        return empty, empty, empty, empty
    # cheap prefilters: enough trades, short enough, big enough net move
    keep = (last - first + 1 >= criteria.min_trades) & (t[last] - t[first] < criteria.max_duration)
    keep &= np.abs(p[last] - p[first]) / p[first] > criteria.threshold
    first, last, sign = first[keep], last[keep], sign[keep]
    if len(first) == 0:
        return empty, empty, empty, empty

    lengths = last - first + 1
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    run_of = np.repeat(np.arange(len(first)), lengths)
    idx = np.arange(lengths.sum()) - np.repeat(offsets, lengths) + np.repeat(first, lengths)
    base = p[first][run_of]
    crossed = np.abs(p[idx] - base) / base > criteria.threshold
    sentinel = np.iinfo(np.int64).max
    first_cross = np.minimum.reduceat(np.where(crossed, idx, sentinel), offsets)

    change = np.maximum(first_cross, first + criteria.min_trades - 1)
    ok = first_cross != sentinel
    ok &= change <= last
    change_safe = np.where(ok, change, first)
    ok &= t[change_safe] - t[first] < criteria.max_duration
    ok &= t[last] - t[first] < criteria.max_duration
    return first[ok], change[ok], last[ok], sign[ok]


def detect_events(trades: TradeStream, criteria: DetectionCriteria = DEFAULT_CRITERIA) -> list[UeeEvent]:
    """Detect UEEs in one symbol-day stream.

    ``t_change`` is the earliest trade at which the cumulative return
    exceeds the threshold, at least ``min_trades`` trades have occurred and
    less than ``max_duration`` has elapsed.  Runs that last
    ``max_duration`` or longer are dropped entirely.
    """
    start, change, end, sign = detect_indices(trades.timestamp, trades.price, criteria)
    p, t = trades.price, trades.timestamp
    return [
        UeeEvent(
            trades.symbol, trades.date, Direction.from_sign(s), a, c, b,
            float(p[a]), float(p[c]), float(p[b]), int(t[a]), int(t[c]), int(t[b]),
        )
        for a, c, b, s in zip(start.tolist(), change.tolist(), end.tolist(), sign.tolist())
    ]


def detect_all(streams, criteria: DetectionCriteria = DEFAULT_CRITERIA) -> list[UeeEvent]:
    """Detect over many symbol-day streams; output ordered by (symbol, date, start)."""
    if isinstance(streams, dict):
        streams = [streams[k] for k in sorted(streams)]
    events = []
    for stream in streams:
        events.extend(detect_events(stream, criteria))
    return events
