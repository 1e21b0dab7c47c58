"""Per-file work units and the worker pool that runs them.

A work unit is one trade file (plus, for analytics, its matching quote
files).  Units run in a bounded process pool; results come back in
submission order, so the consolidated output does not depend on the
number of workers.
"""

from __future__ import annotations

import concurrent.futures as cf
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .detect import DetectionCriteria, detect_events
from .ingest import CANONICAL, FormatDescriptor, IngestError, ValidationReport, date_from_name, parse_quotes, parse_trades
from .quotes import analyze_event
from .recovery import recovery_series


def expand_inputs(paths) -> list[Path]:
    """Files named directly plus the regular, non-hidden files of named directories, sorted."""
    out = []
    for p in paths or ():
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(f for f in p.iterdir() if f.is_file() and not f.name.startswith(".")))
        elif p.is_file():
            out.append(p)
        else:
            raise IngestError(f"input {p} does not exist")
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def quote_files_for(trade_file: Path, quote_files: list[Path]) -> list[Path]:
    """Quote files sharing the trade file's date token; undated files always match."""
    day = date_from_name(trade_file.name)
    if day is None:
        return list(quote_files)
    return [q for q in quote_files if date_from_name(q.name) in (day, None)]


def run_units(fn, units, workers: int = 1) -> list:
    """Apply ``fn`` to each unit, in a process pool when ``workers > 1``."""
    units = list(units)
    if workers <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    with cf.ProcessPoolExecutor(max_workers=min(workers, len(units))) as pool:
        return list(pool.map(fn, units))


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectUnit:
    path: Path
    fmt: FormatDescriptor = CANONICAL
    criteria: tuple[DetectionCriteria, ...] = (DetectionCriteria(),)
    universe: frozenset | None = None


@dataclass
class DetectResult:
    path: Path
    report: ValidationReport
    streams: list  # (symbol, date) keys present in the file after filtering
    events: dict  # criterion label -> list[UeeEvent]
    trades: int = 0


def detect_file(unit: DetectUnit) -> DetectResult:
    streams, report = parse_trades(unit.path, unit.fmt)
    if unit.universe is not None:
        streams = {k: s for k, s in streams.items() if k[0] in unit.universe}
    events = {c.label: [] for c in unit.criteria}
    for key in sorted(streams):
        for c in unit.criteria:
            events[c.label].extend(detect_events(streams[key], c))
    return DetectResult(unit.path, report, sorted(streams), events, sum(len(s) for s in streams.values()))


# ---------------------------------------------------------------------------
# Analytics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyzeUnit:
    path: Path
    quote_paths: tuple[Path, ...]
    events: dict  # label -> events whose symbol-day lives in this file
    fmt: FormatDescriptor = CANONICAL
    quote_fmt: FormatDescriptor = CANONICAL
    half_width: int = 400
    n_max: int = 100
    skip_quotes: bool = False
    window_opts: dict = field(default_factory=dict)


@dataclass
class AnalyzeResult:
    path: Path
    quote_report: ValidationReport | None
    analytics: dict  # label -> list[EventAnalytics]
    recovery: dict  # label -> list[RecoverySeries]


def analyze_file(unit: AnalyzeUnit) -> AnalyzeResult:
    trades, _ = parse_trades(unit.path, unit.fmt)
    quotes, qreport = {}, None
    if not unit.skip_quotes:
        for qp in unit.quote_paths:
            # quotes carry no date column in the canonical layout; pin them to the trade file's day
            qs, rep = parse_quotes(qp, unit.quote_fmt, date=date_from_name(unit.path.name))
            quotes.update(qs)
            qreport = rep if qreport is None else qreport.merge(rep)
    analytics, recovery = {}, {}
    for label, events in unit.events.items():
        analytics[label], recovery[label] = [], []
        for e in events:
            stream = trades.get((e.symbol, e.date))
            if stream is None:
                raise IngestError(f"{unit.path}: symbol-day {e.symbol} {e.date} of event {e.event_id} not found")
            q = None if unit.skip_quotes else quotes.get((e.symbol, e.date))
            analytics[label].append(analyze_event(e, stream, q, unit.half_width, **unit.window_opts))
            recovery[label].append(recovery_series(e, stream, unit.n_max))
    return AnalyzeResult(unit.path, qreport, analytics, recovery)
