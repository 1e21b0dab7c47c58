"""Quote-side analytics around detected events.

Three per-event measures: the largest consecutive-update return on the
relevant side of the book (bid for crashes, ask for spikes), the volume
traded up to the change trade, and a window of relative spreads indexed by
quote update ("spread event") around the event start.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .detect import Direction, UeeEvent
from .ingest import OutOfSessionError, QuoteRecord, QuoteStream, TradeStream, session_of

DEFAULT_HALF_WIDTH = 400


class UndefinedSpreadError(ValueError):
    """Relative spread is undefined because the ask is not positive."""


class CrossedQuoteError(ValueError):
    """Crossed quote (bid > ask); excluded from spread analytics."""


class AnchorMissingError(LookupError):
    """No usable quote at or before the event start."""


class EmptyProfileError(ValueError):
    """No complete spread window to average."""


class Side(str, enum.Enum):
    BID = "bid"
    ASK = "ask"

    @classmethod
    def for_direction(cls, direction: Direction) -> Side:
        return cls.BID if direction is Direction.FLASH_CRASH else cls.ASK


def relative_spread(quote: QuoteRecord) -> float:
    """``(ask - bid) / ask``.

    A one-sided quote (bid of zero) gives 1.0; such quotes carry the
    ``one_sided`` flag and are kept out of the spread windows.
    """
    if not quote.ask > 0:
        raise UndefinedSpreadError(f"ask {quote.ask} is not positive")
    if quote.bid > quote.ask:
        raise CrossedQuoteError(f"bid {quote.bid} > ask {quote.ask}")
    return (quote.ask - quote.bid) / quote.ask


def relative_spreads(quotes: QuoteStream) -> np.ndarray:
    """Vectorised relative spread; NaN where the quote is flagged."""
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (quotes.ask - quotes.bid) / quotes.ask
    return np.where(quotes.usable, s, np.nan)


# ---------------------------------------------------------------------------
# Largest quote return
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LargestQuoteMove:
    event_id: str
    side: Side
    value: float
    t_from: int
    t_to: int
    updates: int


def largest_quote_return(event: UeeEvent, quotes: QuoteStream) -> LargestQuoteMove | None:
    """Largest-magnitude return between consecutive same-side quote updates.

    Only updates with ``t_start <= t <= t_end`` take part; updates whose
    side price is not positive are skipped.  Returns ``None`` when fewer
    than two updates fall inside the event.
    """
    side = Side.for_direction(event.direction)
    lo = np.searchsorted(quotes.timestamp, event.t_start, side="left")
    hi = np.searchsorted(quotes.timestamp, event.t_end, side="right")
    q = (quotes.bid if side is Side.BID else quotes.ask)[lo:hi]
    ts = quotes.timestamp[lo:hi]
    keep = q > 0
    q, ts = q[keep], ts[keep]
    if len(q) < 2:
        return None
    r = (q[1:] - q[:-1]) / q[:-1]
    k = int(np.argmax(np.abs(r)))
    return LargestQuoteMove(event.event_id, side, float(r[k]), int(ts[k]), int(ts[k + 1]), len(q))


# ---------------------------------------------------------------------------
# Accumulated volume
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccumulatedVolume:
    event_id: str
    shares: int


def accumulated_volume(event: UeeEvent, trades: TradeStream) -> AccumulatedVolume:
    """Shares traded from the run's first trade through the change trade."""
    shares = int(trades.volume[event.start_index: event.change_index + 1].sum())
    return AccumulatedVolume(event.event_id, shares)


# ---------------------------------------------------------------------------
# Spread windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpreadWindow:
    """Relative spreads at offsets ``-W..+W`` around the event start.

    ``values[W + k]`` is the spread at offset ``k``; absent offsets are NaN.
    """

    event_id: str
    direction: Direction
    half_width: int
    values: np.ndarray
    complete: bool

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.half_width, self.half_width + 1)

    def at(self, offset: int) -> float:
        return float(self.values[self.half_width + offset])


def _clip_range(anchor_ts: int, clip_to_session: bool) -> tuple[int, int]:
    if clip_to_session:
        try:
            return session_of(anchor_ts).bounds
        except OutOfSessionError:
            pass
    return (-(2**62), 2**62)


def spread_window(
    event: UeeEvent,
    quotes: QuoteStream,
    half_width: int = DEFAULT_HALF_WIDTH,
    *,
    clip_to_session: bool = True,
    changes_only: bool = False,
) -> SpreadWindow:
    """Relative-spread window anchored at the last usable quote at or before ``t_start``.

    Spread events are usable quote updates (crossed and one-sided quotes
    excluded).  With ``changes_only`` an update only counts when the spread
    value differs from the previous one.  The window never reaches across a
    trading-session boundary when ``clip_to_session`` is set; any truncated
    window is marked incomplete.
    """
    usable = quotes.usable
    ts = quotes.timestamp[usable]
    spread = (quotes.ask[usable] - quotes.bid[usable]) / quotes.ask[usable]
    if changes_only and len(spread):
        keep = np.concatenate([[True], spread[1:] != spread[:-1]])
        ts, spread = ts[keep], spread[keep]
    anchor = int(np.searchsorted(ts, event.t_start, side="right")) - 1
    if anchor < 0:
        raise AnchorMissingError(f"no usable quote at or before {event.t_start} for {event.event_id}")
    lo_t, hi_t = _clip_range(int(ts[anchor]), clip_to_session)
    lo_idx = int(np.searchsorted(ts, lo_t, side="left"))
    hi_idx = int(np.searchsorted(ts, hi_t, side="left"))
    first = max(anchor - half_width, lo_idx)
    last = min(anchor + half_width, hi_idx - 1)
    values = np.full(2 * half_width + 1, np.nan)
    values[first - anchor + half_width: last - anchor + half_width + 1] = spread[first: last + 1]
    complete = first == anchor - half_width and last == anchor + half_width
    return SpreadWindow(event.event_id, event.direction, half_width, values, complete)


def average_spread_profile(windows) -> np.ndarray:
    """Per-offset mean over complete windows (length ``2W + 1``)."""
    windows = list(windows)
    if not windows:
        raise EmptyProfileError("no windows given")
    widths = {w.half_width for w in windows}
    if len(widths) != 1:
        raise ValueError(f"mixed half widths {sorted(widths)}")
    complete = [w.values for w in windows if w.complete]
    if not complete:
        raise EmptyProfileError("all windows are incomplete")
    return np.mean(np.vstack(complete), axis=0)


# ---------------------------------------------------------------------------
# Per-event record
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EventAnalytics:
    event: UeeEvent
    quote_move: LargestQuoteMove | None
    volume: AccumulatedVolume
    window: SpreadWindow | None

    @property
    def abs_quote_return(self) -> float:
        return math.nan if self.quote_move is None else abs(self.quote_move.value)


def analyze_event(event, trades, quotes, half_width=DEFAULT_HALF_WIDTH, **window_opts) -> EventAnalytics:
    move = largest_quote_return(event, quotes) if quotes is not None else None
    try:
        window = spread_window(event, quotes, half_width, **window_opts) if quotes is not None else None
    except AnchorMissingError:
        window = None
    return EventAnalytics(event, move, accumulated_volume(event, trades), window)

