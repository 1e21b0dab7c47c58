"""Post-event recovery ratios.

For the n-th trade after an event ends, the recovery ratio is
``(S_end - S_n) / (S_end - S_start)``: 0 while the price sits at the event
extremum, 1 once it is back at the starting price, negative when the move
continues (aftershock) and above 1 on overshoot.  Values are not clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detect import Direction, UeeEvent
from .ingest import TradeStream

DEFAULT_NMAX = 100


@dataclass(frozen=True)
class RecoverySeries:
    event_id: str
    direction: Direction
    n_max: int
    eta: np.ndarray  # eta[n - 1] for n = 1..available_n

    @property
    def available_n(self) -> int:
        return len(self.eta)


def recovery_ratios(s_start: float, s_end: float, prices) -> np.ndarray:
    return (s_end - np.asarray(prices, dtype=np.float64)) / (s_end - s_start)


def recovery_series(event: UeeEvent, trades: TradeStream, n_max: int = DEFAULT_NMAX) -> RecoverySeries:
    """Recovery ratios for up to ``n_max`` trades after the event's last trade.

    The n-th trade is counted in tape order, so trades sharing a timestamp
    are distinct steps.  Fewer than ``n_max`` values are returned when the
    day ends first.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    after = trades.price[event.end_index + 1: event.end_index + 1 + n_max]
    eta = recovery_ratios(event.s_start, event.s_end, after)
    return RecoverySeries(event.event_id, event.direction, n_max, eta)


@dataclass(frozen=True)
class RecoveryCurves:
    """Counts behind P(eta_n >= high) and P(eta_n <= low) for one direction.

    Index ``n - 1`` of each array refers to the n-th trade after the event.
    Probabilities are NaN where no event has an n-th trade.
    """

    direction: Direction
    high: float
    low: float
    samples: np.ndarray
    high_count: np.ndarray
    low_count: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return np.arange(1, len(self.samples) + 1)

    @property
    def mid_count(self) -> np.ndarray:
        return self.samples - self.high_count - self.low_count

    def _ratio(self, counts):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.samples > 0, counts / np.maximum(self.samples, 1), np.nan)

    @property
    def p_high(self) -> np.ndarray:
        return self._ratio(self.high_count)

    @property
    def p_low(self) -> np.ndarray:
        return self._ratio(self.low_count)

    @property
    def p_mid(self) -> np.ndarray:
        return self._ratio(self.mid_count)

    def merge(self, other: RecoveryCurves) -> RecoveryCurves:
        if (self.direction, self.high, self.low) != (other.direction, other.high, other.low):
            raise ValueError("curves differ in direction or cutoffs")
        n = max(len(self.samples), len(other.samples))
        pad = lambda a: np.pad(a, (0, n - len(a)))  # noqa: E731
        return RecoveryCurves(
            self.direction, self.high, self.low,
            pad(self.samples) + pad(other.samples),
            pad(self.high_count) + pad(other.high_count),
            pad(self.low_count) + pad(other.low_count),
        )


def recovery_curves(series, high: float = 0.8, low: float = 0.2, n_max: int | None = None):
    """Relative frequencies of near-full and near-zero recovery at each n.

    Returns ``{Direction: RecoveryCurves}`` with crashes and spikes counted
    separately.  At each n only events that have an n-th trade contribute.
    """
    series = list(series)
    if low >= high:
        raise ValueError("low cutoff must be below high cutoff")
    if n_max is None:
        if not series:
            raise ValueError("no recovery series given and no n_max")
        n_max = max(s.n_max for s in series)
    out = {}
    for direction in Direction:
        samples = np.zeros(n_max, dtype=np.int64)
        hi = np.zeros(n_max, dtype=np.int64)
        lo = np.zeros(n_max, dtype=np.int64)
        for s in series:
            if s.direction is not direction:
                continue
            eta = s.eta[:n_max]
            k = len(eta)
            samples[:k] += 1
            hi[:k] += eta >= high
            lo[:k] += eta <= low
        out[direction] = RecoveryCurves(direction, high, low, samples, hi, lo)
    return out
