"""Synthetic trade/quote days with planted events and exact ground truth.

A baseline day is a bounded multiplicative random walk with exponential
inter-arrival times and quotes bracketing the last trade.  ``plant_uee``
splices a fully specified event into such a day: a lead-in trade, the
monotonic run, a quote path carrying a pre-event spread ramp and one
planted quote gap, and a recovery path with target recovery ratios.  The
trades after the plant are rescaled so the walk continues from the last
recovery price.

Every generated day is checked with the brute-force enumerator: it must
find the planted positives and nothing else.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .bruteforce import enumerate_stream
from .detect import DEFAULT_CRITERIA, TWO_SECOND_CRITERIA, DetectionCriteria, Direction
from .ingest import (
    AFTER_MARKET_CLOSE,
    MAIN_CLOSE,
    MAIN_OPEN,
    NS_PER_MINUTE,
    NS_PER_SECOND,
    PRE_MARKET_OPEN,
    QuoteStream,
    TradeStream,
    write_quotes,
    write_trades,
)
from .recovery import recovery_ratios

MS = 1_000_000
US = 1_000

LEAD_GAP = 300 * MS
TAIL_GAP = 1 * NS_PER_SECOND
QUOTE_DELAY = 1 * US
LEAD_TICK = 1e-4
CRITERIA = {"1.5s": DEFAULT_CRITERIA, "2.0s": TWO_SECOND_CRITERIA}


class GenerationError(RuntimeError):
    """The generator could not produce a day meeting its guarantees."""


class PlantOverlapError(ValueError):
    """A plant would overlap an existing plant or the day's edges."""


@dataclass(frozen=True)
class DayParams:
    open_time: int = PRE_MARKET_OPEN
    close_time: int = AFTER_MARKET_CLOSE
    mean_trade_gap: float = 2.0  # seconds
    tie_prob: float = 0.02
    quotes_per_trade: int = 2
    initial_price: float = 100.0
    step: float = 2e-4
    p_flat: float = 0.3
    base_spread: float = 0.0005

    def __post_init__(self):
        if not self.mean_trade_gap > 0:
            raise ValueError("tick rate must be positive")
        if not self.initial_price > 0:
            raise ValueError("initial price must be positive")


@dataclass
class SymbolDay:
    symbol: str
    date: str
    trades: TradeStream
    quotes: QuoteStream
    occupied: list = field(default_factory=list)


def _rng(seed: int, *parts) -> np.random.Generator:
    keys = [int(seed)] + [zlib.crc32(str(p).encode()) for p in parts]
    return np.random.default_rng(keys)


def _quote(mid, spread):
    """Bid/ask around ``mid`` whose relative spread ``(a - b) / a`` is ``spread``."""
    ask = mid * (1 + spread / 2)
    bid = ask * (1 - spread)
    return bid, ask


def _baseline_once(rng, symbol, date, params: DayParams):
    span = (params.close_time - params.open_time) / NS_PER_SECOND
    n_est = int(span / params.mean_trade_gap * 1.3) + 10
    gaps = rng.exponential(params.mean_trade_gap, n_est) * NS_PER_SECOND
    gaps[rng.random(n_est) < params.tie_prob] = 0
    ts = params.open_time + 1 * NS_PER_SECOND + np.cumsum(gaps).astype(np.int64)
    ts = ts[ts < params.close_time - NS_PER_SECOND]
    n = len(ts)
    moves = rng.choice([-1.0, 0.0, 1.0], n, p=[(1 - params.p_flat) / 2, params.p_flat, (1 - params.p_flat) / 2])
    moves[0] = 0.0
    price = params.initial_price * np.cumprod(1 + params.step * moves)
    price = np.clip(price, params.initial_price / 2, params.initial_price * 2)
    volume = rng.integers(1, 20, n) * 100
    trades = TradeStream.from_arrays(ts, price, volume, symbol=symbol, date=date)

    # quotes: one before the first trade, then quotes_per_trade inside each gap
    nxt = np.append(ts[1:], params.close_time)
    k = params.quotes_per_trade
    frac = np.sort(rng.random((n, k)), axis=1)
    qts = (ts[:, None] + 1 + (frac * np.maximum(nxt - ts - 2, 0)[:, None]).astype(np.int64)).ravel()
    mid = np.repeat(price, k)
    qts = np.concatenate([[params.open_time], qts])
    mid = np.concatenate([[price[0]], mid])
    spread = params.base_spread * (1 + 0.2 * rng.random(len(mid)))
    bid, ask = _quote(mid, spread)
    sizes = rng.integers(1, 50, (2, len(mid))) * 100
    order = np.argsort(qts, kind="stable")
    quotes = QuoteStream.from_arrays(qts[order], bid[order], ask[order], sizes[0][order], sizes[1][order],
                                     symbol=symbol, date=date)
    return trades, quotes


def generate_baseline(seed: int, symbol: str, date: str, params: DayParams = DayParams(),
                      max_retries: int = 5) -> SymbolDay:
    """Reproducible event-free day for one symbol.

    Raises :class:`GenerationError` if no attempt out of ``max_retries`` is
    free of events under the loosest built-in criterion.
    """
    for attempt in range(max_retries):
        rng = _rng(seed, symbol, date, attempt)
        trades, quotes = _baseline_once(rng, symbol, date, params)
        if all(not enumerate_stream(trades, c) for c in CRITERIA.values()):
            return SymbolDay(symbol, date, trades, quotes)
    raise GenerationError(f"baseline for {symbol} {date} kept producing events; lower the volatility")


# ---------------------------------------------------------------------------
# Planting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantSpec:
    """Shape of one planted event.

    ``change_at`` is the run position (0 = first trade) where the cumulative
    move first exceeds ``threshold``; ``reversal_at`` makes the path
    non-monotonic by inserting one counter move at that position.  The
    recovery path lists target recovery ratios for the trades right after
    the run; its first value must be positive so the run ends there.
    ``quote_gap`` is widened to twice the largest tracking step when it
    would not clearly dominate them; the realised value is recorded.
    """

    direction: Direction
    total_return: float
    trade_count: int
    duration: int
    start_time: int
    volumes: tuple[int, ...] | None = None
    change_at: int | None = None
    quote_gap: float | None = None
    ramp_from: float = 0.001
    ramp_to: float = 0.004
    ramp_updates: int = 50
    recovery: tuple[float, ...] = (0.05,)
    reversal_at: int | None = None
    threshold: float = 0.008
    label: str = ""

    def __post_init__(self):
        sign = self.direction.sign
        if self.total_return == 0 or np.sign(self.total_return) != sign:
            raise ValueError("total_return sign must match direction")
        if self.trade_count < 2:
            raise ValueError("need at least two trades")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.duration < (self.trade_count - 1) * 100 * US:
            raise ValueError("duration too short for the trade count")
        if self.volumes is not None and len(self.volumes) != self.trade_count:
            raise ValueError("one volume per trade")
        if not self.recovery or not self.recovery[0] > 0:
            raise ValueError("first recovery ratio must be positive to end the run")
        if self.quote_gap is not None and np.sign(self.quote_gap) != sign:
            raise ValueError("quote gap must point in the event direction")
        if self.reversal_at is not None and not 2 <= self.reversal_at <= self.trade_count - 2:
            raise ValueError("reversal must sit inside the path")
        if self.change_at is not None and not 1 <= self.change_at <= self.trade_count - 1:
            raise ValueError("change_at out of range")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = self.direction.value
        d["volumes"] = list(self.volumes) if self.volumes is not None else None
        d["recovery"] = list(self.recovery)
        return d


@dataclass
class PlantedEvent:
    """Ground truth for one plant.  Index fields are filled by :func:`finalize_day`."""

    plant_id: str
    symbol: str
    date: str
    spec: PlantSpec
    kind: str  # "positive" or "negative"
    reason: str
    s_start: float
    s_end: float
    t_start: int
    t_end: int
    r_uee: float
    change_offset: dict  # criterion label -> run position of t_change, or None
    trade_times: np.ndarray
    trade_prices: np.ndarray
    trade_volumes: np.ndarray
    quote_gap: float | None
    ramp: np.ndarray  # spread at offsets -L..0
    eta_target: np.ndarray
    start_index: int | None = None
    eta_expected: np.ndarray | None = None

    def detected(self, label: str) -> bool:
        return self.change_offset.get(label) is not None

    def change_index(self, label: str) -> int | None:
        off = self.change_offset.get(label)
        return None if off is None or self.start_index is None else self.start_index + off

    @property
    def end_index(self) -> int | None:
        return None if self.start_index is None else self.start_index + self.spec.trade_count - 1

    def t_change(self, label: str) -> int | None:
        off = self.change_offset.get(label)
        return None if off is None else int(self.trade_times[off])

    def s_change(self, label: str) -> float | None:
        off = self.change_offset.get(label)
        return None if off is None else float(self.trade_prices[off])

    def trade_count(self, label: str) -> int | None:
        off = self.change_offset.get(label)
        return None if off is None else off + 1

    def accumulated_volume(self, label: str) -> int | None:
        off = self.change_offset.get(label)
        return None if off is None else int(self.trade_volumes[: off + 1].sum())

    @property
    def direction(self) -> Direction:
        return self.spec.direction

    def to_dict(self) -> dict:
        return {
            "plant_id": self.plant_id,
            "symbol": self.symbol,
            "date": self.date,
            "kind": self.kind,
            "reason": self.reason,
            "spec": self.spec.to_dict(),
            "direction": self.direction.value,
            "s_start": self.s_start,
            "s_end": self.s_end,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "r_uee": self.r_uee,
            "change_offset": self.change_offset,
            "start_index": self.start_index,
            "end_index": self.end_index,
            "trade_times": self.trade_times.tolist(),
            "trade_prices": self.trade_prices.tolist(),
            "trade_volumes": self.trade_volumes.tolist(),
            "quote_gap": self.quote_gap,
            "ramp": self.ramp.tolist(),
            "eta_target": self.eta_target.tolist(),
            "eta_expected": None if self.eta_expected is None else self.eta_expected.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PlantedEvent:
        spec = dict(d["spec"])
        spec["direction"] = Direction(spec["direction"])
        spec["volumes"] = tuple(spec["volumes"]) if spec["volumes"] is not None else None
        spec["recovery"] = tuple(spec["recovery"])
        return cls(
            d["plant_id"], d["symbol"], d["date"], PlantSpec(**spec), d["kind"], d["reason"],
            d["s_start"], d["s_end"], d["t_start"], d["t_end"], d["r_uee"], d["change_offset"],
            np.asarray(d["trade_times"], dtype=np.int64), np.asarray(d["trade_prices"]),
            np.asarray(d["trade_volumes"], dtype=np.int64), d["quote_gap"], np.asarray(d["ramp"]),
            np.asarray(d["eta_target"]), d["start_index"],
            None if d["eta_expected"] is None else np.asarray(d["eta_expected"]),
        )


def _cumulative_path(spec: PlantSpec, rng) -> np.ndarray:
    """Non-decreasing cumulative |return| c_0 = 0 .. c_{N-1} = |R|."""
    n = spec.trade_count
    total = abs(spec.total_return)
    thr = spec.threshold
    if total <= thr:
        c = np.sort(rng.random(n))
        c = (c - c[0]) / (c[-1] - c[0]) * total if c[-1] > c[0] else np.linspace(0, total, n)
        c[0], c[-1] = 0.0, total
        return c
    cpos = spec.change_at
    if cpos is None:
        cpos = int(rng.integers(max(1, n // 3), n))
    pre_top = thr * rng.uniform(0.6, 0.97)
    # positions 1..cpos-1 rise to pre_top, with the odd repeated value
    pre = np.sort(rng.random(cpos - 1)) * pre_top if cpos > 1 else np.zeros(0)
    if len(pre) > 2:
        dup = rng.random(len(pre)) < 0.15
        dup[0] = False
        pre = np.maximum.accumulate(np.where(dup, np.roll(pre, 1), pre))
    if cpos == n - 1:
        post = np.array([total])
    else:
        cross = thr + (total - thr) * rng.uniform(0.05, 0.5)
        post = np.linspace(cross, total, n - cpos)
    return np.concatenate([[0.0], pre, post])


def _recovery_times(rng, t_end, m):
    gaps = rng.integers(250 * MS, 600 * MS, m)
    return t_end + np.cumsum(gaps)


def _event_times(rng, t0, duration, n):
    min_gap = 100 * US
    slack = duration - (n - 1) * min_gap
    w = rng.dirichlet(np.ones(n - 1))
    cum = np.concatenate([[0.0], np.cumsum(min_gap + slack * w)])
    rel = np.round(cum).astype(np.int64)
    rel[-1] = duration
    return t0 + rel


def _expected_change(c_prices, times, spec: PlantSpec, crit: DetectionCriteria):
    """Run position of t_change under ``crit`` for a monotone plant, else None."""
    if spec.reversal_at is not None:
        return None
    p0 = c_prices[0]
    n = len(c_prices)
    if not times[-1] - times[0] < crit.max_duration:
        return None
    for k in range(n):
        if abs(c_prices[k] - p0) / p0 > crit.threshold and k + 1 >= crit.min_trades \
                and times[k] - times[0] < crit.max_duration:
            return k
    return None


def plant_uee(day: SymbolDay, spec: PlantSpec, *, seed: int = 0, plant_id: str | None = None,
              params: DayParams = DayParams(), kind: str | None = None, reason: str = ""):
    """Splice the event described by ``spec`` into ``day``.

    Returns ``(new_day, PlantedEvent)``.  Raises :class:`PlantOverlapError`
    when the plant would overlap an earlier plant or run past the day.
    """
    rng = _rng(seed, day.symbol, day.date, "plant", spec.start_time)
    n = spec.trade_count
    sign = spec.direction.sign
    m = len(spec.recovery)

    t0 = int(spec.start_time)
    t_lead = t0 - LEAD_GAP
    times = _event_times(rng, t0, spec.duration, n)
    t_end = int(times[-1])
    rec_times = _recovery_times(rng, t_end, m)
    w0, w1 = t_lead - 1, int(rec_times[-1]) + TAIL_GAP
    if w0 <= params.open_time + NS_PER_MINUTE or w1 >= params.close_time - NS_PER_MINUTE:
        raise PlantOverlapError("plant does not fit inside the day")
    for lo, hi in day.occupied:
        if w0 <= hi and lo <= w1:
            raise PlantOverlapError(f"plant at {t0} overlaps an existing plant")

    tr, qu = day.trades, day.quotes
    before = tr.timestamp < w0
    after = tr.timestamp > w1
    prev_idx = np.flatnonzero(tr.timestamp <= w1)
    base_b = float(tr.price[before][-1]) if before.any() else float(tr.price[0])
    base_at_w1 = float(tr.price[prev_idx[-1]]) if len(prev_idx) else float(tr.price[0])

    # event run
    c = _cumulative_path(spec, rng)
    if spec.reversal_at is not None:
        r = spec.reversal_at
        c = c.copy()
        c[r] = c[r - 1] - min(0.0005, c[r - 1] / 2 + 1e-5)
    s_start = base_b * (1 - sign * LEAD_TICK)
    prices = s_start * (1 + sign * c)
    s_end = float(prices[-1])
    volumes = np.asarray(spec.volumes if spec.volumes is not None else rng.integers(1, 50, n) * 100,
                         dtype=np.int64)
    change = {label: _expected_change(prices, times, spec, crit) for label, crit in CRITERIA.items()}

    # recovery path
    eta_target = np.asarray(spec.recovery, dtype=np.float64)
    rec_prices = s_end - eta_target * (s_end - s_start)
    if np.any(rec_prices <= 0):
        raise ValueError("recovery path reaches a non-positive price")
    rec_vol = rng.integers(1, 20, m) * 100

    # quotes: ramp before t_start, tracking path with one gap during the event
    spreads_ramp = np.linspace(spec.ramp_from, spec.ramp_to, spec.ramp_updates + 1)
    ramp_ts = t_lead + (np.arange(1, spec.ramp_updates + 2) * LEAD_GAP) // (spec.ramp_updates + 2)
    ramp_bid, ramp_ask = _quote(np.full(len(spreads_ramp), base_b), spreads_ramp)

    ev_bid, ev_ask = _quote(prices, np.full(n, spec.ramp_to))
    gap_value = None
    if spec.quote_gap is not None and n >= 3:
        kg = (n - 1) // 2
        side = ev_bid if sign < 0 else ev_ask
        pick = np.minimum if sign < 0 else np.maximum
        track = side[: n - 1].copy()
        steps = np.abs(np.diff(track) / track[:-1])
        gap = spec.quote_gap
        if steps.max(initial=0.0) * 1.5 >= abs(gap):
            gap = sign * 2.0 * float(steps.max())
        level = side[kg - 1] * (1 + gap)
        side[kg:] = pick(level, side[kg:])
        gap_value = gap
    ev_qts = times + QUOTE_DELAY

    k = params.quotes_per_trade
    rec_next = np.append(rec_times[1:], w1)
    frac = (np.arange(1, k + 1) / (k + 1))[None, :]
    rec_qts = (rec_times[:, None] + QUOTE_DELAY + (frac * (rec_next - rec_times - 2 * QUOTE_DELAY)[:, None])
               .astype(np.int64)).ravel()
    rec_bid, rec_ask = _quote(np.repeat(rec_prices, k), params.base_spread)

    # continuation of the baseline from the last recovery price
    scale = float(rec_prices[-1]) / base_at_w1
    q_before = qu.timestamp < t_lead
    q_after = qu.timestamp > w1

    lead = (np.array([t_lead]), np.array([base_b]), np.array([100]))
    new_trades = TradeStream.from_arrays(
        np.concatenate([tr.timestamp[before], lead[0], times, rec_times, tr.timestamp[after]]),
        np.concatenate([tr.price[before], lead[1], prices, rec_prices, tr.price[after] * scale]),
        np.concatenate([tr.volume[before], lead[2], volumes, rec_vol, tr.volume[after]]),
        symbol=day.symbol, date=day.date,
    )
    nq_ramp = len(ramp_ts)
    sizes = lambda k_: rng.integers(1, 50, k_) * 100  # noqa: E731
    new_quotes = QuoteStream.from_arrays(
        np.concatenate([qu.timestamp[q_before], ramp_ts, ev_qts, rec_qts, qu.timestamp[q_after]]),
        np.concatenate([qu.bid[q_before], ramp_bid, ev_bid, rec_bid, qu.bid[q_after] * scale]),
        np.concatenate([qu.ask[q_before], ramp_ask, ev_ask, rec_ask, qu.ask[q_after] * scale]),
        np.concatenate([qu.bid_size[q_before], sizes(nq_ramp), sizes(n), sizes(len(rec_qts)), qu.bid_size[q_after]]),
        np.concatenate([qu.ask_size[q_before], sizes(nq_ramp), sizes(n), sizes(len(rec_qts)), qu.ask_size[q_after]]),
        symbol=day.symbol, date=day.date,
    )
    if np.any(np.diff(new_trades.timestamp) < 0) or np.any(np.diff(new_quotes.timestamp) < 0):
        raise GenerationError("spliced day is out of time order")

    if kind is None:
        kind = "positive" if change["1.5s"] is not None else "negative"
    planted = PlantedEvent(
        plant_id or f"{day.symbol}-{day.date}-{t0}",
        day.symbol, day.date, spec, kind, reason,
        float(s_start), s_end, t0, t_end, (s_end - float(s_start)) / float(s_start), change,
        times, prices, volumes, gap_value, spreads_ramp, eta_target,
    )
    new_day = SymbolDay(day.symbol, day.date, new_trades, new_quotes, sorted(day.occupied + [(w0, w1)]))
    return new_day, planted


def finalize_day(day: SymbolDay, planted: list[PlantedEvent], n_max: int = 100):
    """Resolve stream indices and expected recovery ratios for each plant."""
    for p in planted:
        i = int(np.searchsorted(day.trades.timestamp, p.t_start, side="left"))
        if day.trades.timestamp[i] != p.t_start or day.trades.price[i] != p.s_start:
            raise GenerationError(f"plant {p.plant_id} not found in its day")
        p.start_index = i
        end = i + p.spec.trade_count - 1
        after = day.trades.price[end + 1: end + 1 + n_max]
        p.eta_expected = recovery_ratios(p.s_start, p.s_end, after)


def self_check(day: SymbolDay, planted: list[PlantedEvent]) -> None:
    """Brute-force enumeration must find exactly the planted positives."""
    for label, crit in CRITERIA.items():
        found = set(enumerate_stream(day.trades, crit))
        want = {
            (p.start_index, p.change_index(label), p.end_index, p.direction.sign)
            for p in planted if p.detected(label)
        }
        if found != want:
            extra = sorted(found - want)[:5]
            missing = sorted(want - found)[:5]
            raise GenerationError(
                f"{day.symbol} {day.date} [{label}]: enumerator disagrees with plants "
                f"(unexpected {extra}, missing {missing})")


# ---------------------------------------------------------------------------
# Standard corpus
# ---------------------------------------------------------------------------


NEGATIVE_KINDS = ("few_trades", "small_move", "too_slow", "reversal")
RECOVERY_SHAPES = ("none", "full", "partial", "gradual", "aftershock", "overshoot")


def recovery_path(rng, shape: str, m: int = 20) -> tuple[float, ...]:
    if shape == "none":
        eta = rng.uniform(0.01, 0.15, m)
    elif shape == "full":
        eta = rng.uniform(0.85, 1.05, m)
    elif shape == "partial":
        eta = rng.uniform(0.3, 0.7, m)
    elif shape == "gradual":
        eta = np.linspace(0.05, 1.0, m) + rng.uniform(-0.03, 0.03, m)
    elif shape == "aftershock":
        eta = -rng.uniform(0.05, 0.6, m)
    elif shape == "overshoot":
        eta = rng.uniform(1.05, 1.5, m)
    else:
        raise ValueError(f"unknown recovery shape {shape!r}")
    eta[0] = abs(eta[0]) if eta[0] != 0 else 0.01
    return tuple(float(x) for x in eta)


def _off_grid(rng, lo, hi):
    """Uniform draw kept away from multiples of 0.001 so histogram bins are unambiguous."""
    while True:
        x = rng.uniform(lo, hi)
        if abs(x * 1000 - round(x * 1000)) > 0.02:
            return float(x)


def positive_spec(rng, start_time: int) -> PlantSpec:
    direction = Direction.FLASH_CRASH if rng.random() < 0.5 else Direction.FLASH_SPIKE
    n = int(rng.integers(11, 61))
    total = _off_grid(rng, 0.0081, 0.02)
    duration = int(rng.uniform(0.2, 1.4) * NS_PER_SECOND)
    duration = max(duration, (n - 1) * 100 * US + 1)
    gap = float(rng.uniform(0.009, 0.015))
    # heavier volume goes with smaller quote gaps
    per_trade = int(rng.integers(8, 13) * (0.015 / gap) ** 4) * 100
    return PlantSpec(
        direction, direction.sign * total, n, duration, start_time,
        volumes=(per_trade,) * n,
        quote_gap=direction.sign * gap,
        ramp_from=float(rng.uniform(0.0005, 0.0015)),
        ramp_to=float(rng.uniform(0.003, 0.006)),
        recovery=recovery_path(rng, RECOVERY_SHAPES[int(rng.integers(len(RECOVERY_SHAPES)))]),
        label="positive",
    )


def negative_spec(rng, start_time: int, which: str) -> PlantSpec:
    direction = Direction.FLASH_CRASH if rng.random() < 0.5 else Direction.FLASH_SPIKE
    sgn = direction.sign
    common = dict(
        start_time=start_time, quote_gap=sgn * float(rng.uniform(0.02, 0.03)),
        recovery=recovery_path(rng, "partial"), label=which,
    )
    if which == "few_trades":
        return PlantSpec(direction, sgn * _off_grid(rng, 0.0085, 0.015), 10,
                         int(rng.uniform(0.3, 1.2) * NS_PER_SECOND), **common)
    if which == "small_move":
        return PlantSpec(direction, sgn * 0.0079, int(rng.integers(11, 41)),
                         int(rng.uniform(0.3, 1.2) * NS_PER_SECOND), **common)
    if which == "too_slow":
        return PlantSpec(direction, sgn * _off_grid(rng, 0.009, 0.015), int(rng.integers(11, 41)),
                         int(1.6 * NS_PER_SECOND), **common)
    if which == "reversal":
        n = int(rng.integers(12, 21))
        return PlantSpec(direction, sgn * _off_grid(rng, 0.009, 0.015), n,
                         int(rng.uniform(0.3, 1.2) * NS_PER_SECOND), reversal_at=n // 2, **common)
    raise ValueError(f"unknown negative kind {which!r}")


def slot_times(rng, count: int, spacing_min: int = 15) -> list[int]:
    """Start times on a grid from 04:30 to 19:30, weighted towards the session opens."""
    grid = np.arange(4 * 60 + 30, 19 * 60 + 31, spacing_min) * NS_PER_MINUTE
    weights = np.ones(len(grid))
    hot = ((grid >= MAIN_OPEN) & (grid < MAIN_OPEN + 30 * NS_PER_MINUTE)) | \
          ((grid >= MAIN_CLOSE) & (grid < MAIN_CLOSE + 30 * NS_PER_MINUTE))
    weights[hot] = 4.0
    pick = rng.choice(len(grid), size=count, replace=False, p=weights / weights.sum())
    jitter = rng.integers(NS_PER_SECOND, 5 * NS_PER_MINUTE, count)
    return sorted(int(grid[i] + j) for i, j in zip(pick, jitter))


@dataclass
class GroundTruth:
    seed: int | None
    events: list[PlantedEvent]
    files: dict = field(default_factory=dict)

    def positives(self, label: str = "1.5s") -> list[PlantedEvent]:
        return [p for p in self.events if p.detected(label)]

    def negatives(self, label: str = "1.5s") -> list[PlantedEvent]:
        return [p for p in self.events if not p.detected(label)]

    def checksum(self) -> str:
        body = json.dumps([e.to_dict() for e in self.events], sort_keys=True).encode()
        return hashlib.sha256(body).hexdigest()

    def to_json(self) -> str:
        doc = {
            "schema": "ueekit.ground_truth/1",
            "seed": self.seed,
            "criteria": {k: v.to_dict() for k, v in CRITERIA.items()},
            "files": dict(sorted(self.files.items())),
            "checksum": self.checksum(),
            "events": [e.to_dict() for e in self.events],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> GroundTruth:
        doc = json.loads(text)
        gt = cls(doc["seed"], [PlantedEvent.from_dict(e) for e in doc["events"]], doc.get("files", {}))
        if gt.checksum() != doc["checksum"]:
            raise ValueError("ground truth checksum mismatch")
        return gt


@dataclass
class Corpus:
    days: list[SymbolDay]
    truth: GroundTruth

    def trade_streams(self) -> dict:
        return {(d.symbol, d.date): d.trades for d in self.days}

    def quote_streams(self) -> dict:
        return {(d.symbol, d.date): d.quotes for d in self.days}


def business_days(first: str, count: int) -> list[str]:
    d = dt.date.fromisoformat(first)
    out = []
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += dt.timedelta(days=1)
    return out


def build_day(seed: int, symbol: str, date: str, specs, params: DayParams = DayParams(),
              check: bool = True):
    """Baseline plus the given plants, finalized and self-checked."""
    day = generate_baseline(seed, symbol, date, params)
    planted = []
    for i, (spec, reason) in enumerate(specs):
        day, p = plant_uee(day, spec, seed=seed, params=params, reason=reason,
                           plant_id=f"{symbol}-{date}-{i:02d}")
        planted.append(p)
    finalize_day(day, planted)
    if check:
        self_check(day, planted)
    return day, planted


def fixture_suite(seed: int, symbols=("AAL", "MSFT", "JNJ"), first_date: str = "2021-01-04",
                  n_days: int = 10, positives_per_day: int = 9, negatives_per_day: int = 4,
                  params: DayParams = DayParams(), bad_quotes: int = 2, check: bool = True) -> Corpus:
    """The standard acceptance corpus.

    With the defaults: 30 symbol-days, 270 positives spanning both
    directions, 0.2-1.4 s, 11-60 trades and moves of 0.0081-0.02, plus 120
    near misses cycling through too few trades, a 0.0079 move, a 1.6 s
    duration and a single reversal.  The 30 slow near misses are the only
    extra events under the 2.0 s criterion (about 11%).  Per-trade volume
    falls as the planted quote gap grows, and each day carries a few
    crossed and one-sided quotes away from the plants.
    """
    days, events = [], []
    neg_counter = 0
    for date in business_days(first_date, n_days):
        for symbol in symbols:
            rng = _rng(seed, "suite", symbol, date)
            starts = slot_times(rng, positives_per_day + negatives_per_day)
            kinds = ["positive"] * positives_per_day + ["negative"] * negatives_per_day
            rng.shuffle(kinds)
            specs = []
            for start, kind in zip(starts, kinds):
                if kind == "positive":
                    specs.append((positive_spec(rng, start), ""))
                else:
                    which = NEGATIVE_KINDS[neg_counter % len(NEGATIVE_KINDS)]
                    neg_counter += 1
                    specs.append((negative_spec(rng, start, which), which))
            params_day = replace(params, initial_price=float(_rng(seed, symbol).uniform(20, 300)))
            day, planted = build_day(seed, symbol, date, specs, params_day, check)
            if bad_quotes:
                day = inject_bad_quotes(day, seed, bad_quotes, bad_quotes)
            days.append(day)
            events.extend(planted)
    return Corpus(days, GroundTruth(seed, events))


def inject_bad_quotes(day: SymbolDay, seed: int, crossed: int = 3, one_sided: int = 3) -> SymbolDay:
    """Corrupt a few baseline quotes away from any plant: crossed (bid > ask) and zero-bid."""
    rng = _rng(seed, day.symbol, day.date, "defects")
    q = day.quotes
    free = np.ones(len(q), dtype=bool)
    for lo, hi in day.occupied:
        # keep spread windows around plants clean
        free &= (q.timestamp < lo - 10 * NS_PER_MINUTE) | (q.timestamp > hi + 10 * NS_PER_MINUTE)
    idx = rng.choice(np.flatnonzero(free), crossed + one_sided, replace=False)
    bid, ask = q.bid.copy(), q.ask.copy()
    bid[idx[:crossed]] = ask[idx[:crossed]] * 1.001
    bid[idx[crossed:]] = 0.0
    quotes = QuoteStream.from_arrays(q.timestamp, bid, ask, q.bid_size, q.ask_size,
                                     symbol=q.symbol, date=q.date)
    return replace(day, quotes=quotes)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_corpus(corpus: Corpus, out_dir) -> dict:
    """Write ``trades/<date>.csv``, ``quotes/<date>.csv`` and ``ground_truth.json``."""
    out = Path(out_dir)
    (out / "trades").mkdir(parents=True, exist_ok=True)
    (out / "quotes").mkdir(parents=True, exist_ok=True)
    files = {}
    for date in sorted({d.date for d in corpus.days}):
        days = sorted((d for d in corpus.days if d.date == date), key=lambda d: d.symbol)
        tp = out / "trades" / f"{date}.csv"
        qp = out / "quotes" / f"{date}.csv"
        write_trades([d.trades for d in days], tp)
        write_quotes([d.quotes for d in days], qp)
        files[f"trades/{date}.csv"] = _sha256(tp)
        files[f"quotes/{date}.csv"] = _sha256(qp)
    corpus.truth.files = files
    (out / "ground_truth.json").write_text(corpus.truth.to_json())
    return files


def stress_stream(seed: int, n: int | None = None, max_len: int = 5000) -> TradeStream:
    """Random stream rich in monotonic bursts, flats, ties and near-threshold moves.

    Prices sit on a cent grid around $10, so a handful of ticks is close to
    0.8%; trending stretches and millisecond gaps make events common.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    if n is None:
        n = int(rng.integers(1, max_len + 1))
    regime_len = int(rng.integers(5, 40))
    regimes = rng.choice([-1, 0, 1, 2], n // regime_len + 1, p=[0.3, 0.1, 0.3, 0.3])
    regime = np.repeat(regimes, regime_len)[:n]
    noise = rng.choice([-1, 0, 1], n, p=[0.35, 0.3, 0.35])
    sticky = rng.random(n) < 0.8
    steps = np.where((regime != 2) & sticky, regime, noise)
    steps = steps * rng.choice([1, 1, 1, 2], n)
    ticks = 1000 + np.cumsum(steps)
    ticks = np.clip(ticks, 200, None)
    price = np.round(ticks * 0.01, 2)
    gap_scale = rng.choice([5 * MS, 50 * MS, 150 * MS, 400 * MS], n // regime_len + 1)
    gaps = rng.exponential(1.0, n) * np.repeat(gap_scale, regime_len)[:n]
    gaps[rng.random(n) < 0.05] = 0
    ts = 10 * 3600 * NS_PER_SECOND + np.cumsum(gaps).astype(np.int64)
    return TradeStream.from_arrays(ts, price, rng.integers(1, 10, n) * 100, symbol=f"R{seed}", date="2021-01-04")
