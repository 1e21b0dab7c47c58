"""Aggregate statistics, histograms and plot-ready exports.

All tallies are plain integer counts so partial results merge by addition.
Writers emit fixed-precision text (9 decimals for ratios) so that reruns
are byte-identical.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .detect import Direction
from .ingest import AFTER_MARKET_CLOSE, MAIN_CLOSE, MAIN_OPEN, NS_PER_MINUTE, PRE_MARKET_OPEN, format_timestamp

RATIO_FMT = "{:.9f}"


def fmt_ratio(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return RATIO_FMT.format(float(x))


# ---------------------------------------------------------------------------
# Summary table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    label: str
    total: int
    spikes: int
    crashes: int

    @property
    def spike_share(self) -> float:
        return self.spikes / self.total if self.total else 0.0

    @property
    def crash_share(self) -> float:
        return self.crashes / self.total if self.total else 0.0


def summary_row(label: str, events) -> SummaryRow:
    counts = Counter(e.direction for e in events)
    spikes = counts[Direction.FLASH_SPIKE]
    crashes = counts[Direction.FLASH_CRASH]
    return SummaryRow(label, spikes + crashes, spikes, crashes)


def summary_table(events_by_label) -> list[SummaryRow]:
    """One row per criterion label: totals and spike/crash split."""
    return [summary_row(label, events) for label, events in events_by_label.items()]


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "total", "spikes", "spike_share", "spike_pct", "crashes", "crash_share", "crash_pct"])
    for r in rows:
        w.writerow([r.label, r.total, r.spikes, fmt_ratio(r.spike_share), f"{100 * r.spike_share:.1f}",
                    r.crashes, fmt_ratio(r.crash_share), f"{100 * r.crash_share:.1f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Calendar histograms
# ---------------------------------------------------------------------------


def _iso_week(date: str) -> tuple[int, int]:
    y, w, _ = dt.date.fromisoformat(date).isocalendar()
    return (y, w)


def weekly_histogram(events, first_date: str | None = None, last_date: str | None = None):
    """Events per ISO week, with zero weeks filled in across the covered range.

    Returns a list of ``((iso_year, iso_week), count)`` in calendar order.
    """
    counts = Counter(_iso_week(e.date) for e in events)
    dates = sorted({e.date for e in events} | {d for d in (first_date, last_date) if d})
    if not dates:
        return []
    monday = lambda d: d - dt.timedelta(days=d.weekday())  # noqa: E731
    cur = monday(dt.date.fromisoformat(dates[0]))
    end = monday(dt.date.fromisoformat(dates[-1]))
    out = []
    while cur <= end:
        key = _iso_week(cur.isoformat())
        out.append((key, counts.get(key, 0)))
        cur += dt.timedelta(days=7)
    return out


@dataclass(frozen=True)
class IntradayHistogram:
    edges: np.ndarray  # ns since midnight, len = bins + 1
    counts: np.ndarray
    out_of_range: int
    markers: tuple[int, ...] = (MAIN_OPEN, MAIN_CLOSE)


def intraday_histogram(events, bin_minutes: int = 5, start: int = PRE_MARKET_OPEN,
                       end: int = AFTER_MARKET_CLOSE) -> IntradayHistogram:
    """Events by start time of day in fixed bins, 04:00-20:00 by default."""
    width = bin_minutes * NS_PER_MINUTE
    if (end - start) % width:
        raise ValueError("bin width must divide the day range")
    nbins = (end - start) // width
    counts = np.zeros(nbins, dtype=np.int64)
    outside = 0
    for e in events:
        if start <= e.t_start < end:
            counts[(e.t_start - start) // width] += 1
        else:
            outside += 1
    edges = start + width * np.arange(nbins + 1, dtype=np.int64)
    return IntradayHistogram(edges, counts, outside)


def cluster_table(events):
    """Per (symbol, date) and per-date event counts plus the busiest day."""
    per_symbol_day = Counter((e.symbol, e.date) for e in events)
    per_day = Counter(e.date for e in events)
    busiest = max(per_day.items(), key=lambda kv: (kv[1], kv[0])) if per_day else ("", 0)
    return {
        "per_symbol_day": sorted(per_symbol_day.items()),
        "per_day": sorted(per_day.items()),
        "max_daily_count": busiest[1],
        "max_daily_date": busiest[0],
    }


# ---------------------------------------------------------------------------
# Return histograms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinSpec:
    lo: float
    hi: float
    width: float

    @property
    def edges(self) -> np.ndarray:
        n = int(round((self.hi - self.lo) / self.width))
        # round away accumulation error so decimal edges land where written
        return np.round(self.lo + self.width * np.arange(n + 1), 12)


DEFAULT_RETURN_BINS = BinSpec(-0.03, 0.03, 0.001)
DEFAULT_QUOTE_RETURN_BINS = BinSpec(-0.03, 0.03, 0.001)


@dataclass(frozen=True)
class Histogram1D:
    edges: np.ndarray
    counts: np.ndarray
    under: int
    over: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.under + self.over


def histogram(values, bins: BinSpec) -> Histogram1D:
    """Half-open bins ``[e_k, e_{k+1})``; the last bin includes its right edge."""
    v = np.asarray(list(values), dtype=np.float64)
    edges = bins.edges
    counts, _ = np.histogram(v, bins=edges)
    return Histogram1D(edges, counts.astype(np.int64), int((v < edges[0]).sum()), int((v > edges[-1]).sum()))


THRESHOLDS = (0.005, 0.008)


@dataclass
class ReturnHistograms:
    uee: dict = field(default_factory=dict)  # Direction -> Histogram1D of r_uee
    quote: dict = field(default_factory=dict)  # Direction -> Histogram1D of largest quote return
    threshold_fraction: dict = field(default_factory=dict)  # (Direction|"all", cutoff) -> fraction
    threshold_count: dict = field(default_factory=dict)
    quote_samples: dict = field(default_factory=dict)
    missing_quote_moves: int = 0


def return_histograms(events, quote_moves, uee_bins: BinSpec = DEFAULT_RETURN_BINS,
                      quote_bins: BinSpec = DEFAULT_QUOTE_RETURN_BINS,
                      thresholds=THRESHOLDS) -> ReturnHistograms:
    """Histograms of event returns and largest quote returns, split by direction.

    ``quote_moves`` is aligned with ``events``; ``None`` entries (events with
    fewer than two quote updates) are tallied in ``missing_quote_moves``.
    """
    events = list(events)
    quote_moves = list(quote_moves)
    if len(quote_moves) != len(events):
        raise ValueError("quote_moves must align with events")
    out = ReturnHistograms()
    all_abs = []
    for d in Direction:
        sel = [i for i, e in enumerate(events) if e.direction is d]
        out.uee[d] = histogram([events[i].r_uee for i in sel], uee_bins)
        qv = [quote_moves[i].value for i in sel if quote_moves[i] is not None]
        out.quote[d] = histogram(qv, quote_bins)
        absq = np.abs(np.asarray(qv, dtype=np.float64))
        all_abs.append(absq)
        out.quote_samples[d] = len(absq)
        for cut in thresholds:
            k = int((absq > cut).sum())
            out.threshold_count[(d, cut)] = k
            out.threshold_fraction[(d, cut)] = k / len(absq) if len(absq) else math.nan
    absq = np.concatenate(all_abs)
    out.quote_samples["all"] = len(absq)
    for cut in thresholds:
        k = int((absq > cut).sum())
        out.threshold_count[("all", cut)] = k
        out.threshold_fraction[("all", cut)] = k / len(absq) if len(absq) else math.nan
    out.missing_quote_moves = sum(m is None for m in quote_moves)
    return out


# ---------------------------------------------------------------------------
# Volume x quote-return 2-D histogram
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hist2DSpec:
    volume_decades: tuple[int, int] = (0, 9)
    per_decade: int = 5
    return_bins: BinSpec = BinSpec(0.0, 0.02, 0.001)

    @property
    def volume_edges(self) -> np.ndarray:
        lo, hi = self.volume_decades
        k = np.arange(lo * self.per_decade, hi * self.per_decade + 1)
        return 10.0 ** (k / self.per_decade)


@dataclass(frozen=True)
class Histogram2D:
    volume_edges: np.ndarray
    return_edges: np.ndarray
    counts: np.ndarray  # shape (volume bins, return bins)
    out_of_range: int
    missing: int

    def triples(self):
        """(volume_bin, return_bin, count) for every cell."""
        nv, nr = self.counts.shape
        return [(i, j, int(self.counts[i, j])) for i in range(nv) for j in range(nr)]


def volume_return_hist2d(records, spec: Hist2DSpec = Hist2DSpec()) -> Histogram2D:
    """2-D counts of accumulated volume against |largest quote return|.

    ``records`` yields ``(shares, quote_return_or_None)`` pairs.
    """
    vols, rets, missing = [], [], 0
    for shares, ret in records:
        if ret is None or (isinstance(ret, float) and math.isnan(ret)):
            missing += 1
            continue
        vols.append(float(shares))
        rets.append(abs(float(ret)))
    vedges = spec.volume_edges
    redges = spec.return_bins.edges
    v = np.asarray(vols)
    r = np.asarray(rets)
    inside = (v >= vedges[0]) & (v <= vedges[-1]) & (r >= redges[0]) & (r <= redges[-1])
    counts, _, _ = np.histogram2d(v[inside], r[inside], bins=[vedges, redges])
    return Histogram2D(vedges, redges, counts.astype(np.int64), int((~inside).sum()), missing)


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def weekly_csv(hist) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iso_year", "iso_week", "count"])
    for (y, wk), c in hist:
        w.writerow([y, wk, c])
    return buf.getvalue()


def intraday_csv(h: IntradayHistogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["# markers", *[format_timestamp(m)[:8] for m in h.markers]])
    w.writerow(["# out_of_range", h.out_of_range])
    w.writerow(["bin_start", "bin_end", "count", "session_boundary"])
    for a, b, c in zip(h.edges[:-1], h.edges[1:], h.counts):
        w.writerow([format_timestamp(a)[:8], format_timestamp(b)[:8], int(c), int(a in h.markers)])
    return buf.getvalue()


def hist1d_csv(hists: dict) -> str:
    """Histograms keyed by a label, written as long-form rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "bin_lo", "bin_hi", "count"])
    for label, h in hists.items():
        for a, b, c in zip(h.edges[:-1], h.edges[1:], h.counts):
            w.writerow([label, fmt_ratio(a), fmt_ratio(b), int(c)])
        w.writerow([label, "-inf", fmt_ratio(h.edges[0]), h.under])
        w.writerow([label, fmt_ratio(h.edges[-1]), "inf", h.over])
    return buf.getvalue()


def hist2d_csv(h: Histogram2D) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["volume_bin", "volume_lo", "volume_hi", "return_bin", "return_lo", "return_hi", "count"])
    for i, j, c in h.triples():
        w.writerow([i, f"{h.volume_edges[i]:.6g}", f"{h.volume_edges[i + 1]:.6g}", j,
                    fmt_ratio(h.return_edges[j]), fmt_ratio(h.return_edges[j + 1]), c])
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"

