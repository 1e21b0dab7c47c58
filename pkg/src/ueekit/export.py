"""Event and analytics files.

Event files are CSV with a versioned ``#`` comment header carrying the
detection criteria, plus a JSON twin.  Prices are written with ``repr`` so
they round-trip exactly; ratios use 9 fixed decimals.  Timestamps appear
both as integer nanoseconds (exact) and as ``HH:MM:SS.nnnnnnnnn``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .detect import DetectionCriteria, Direction, UeeEvent
from .ingest import format_timestamp
from .quotes import EventAnalytics
from .recovery import RecoveryCurves, RecoverySeries
from .report import fmt_ratio

EVENTS_SCHEMA = "ueekit.events/1"
ANALYTICS_SCHEMA = "ueekit.analytics/1"

EVENT_COLUMNS = (
    "event_id", "symbol", "date", "direction",
    "start_index", "change_index", "end_index",
    "t_start_ns", "t_change_ns", "t_end_ns", "t_start", "t_change", "t_end",
    "s_start", "s_change", "s_end", "r_uee", "trade_count", "trade_count_end", "duration_ns",
)


class EventFileError(ValueError):
    """An events file is malformed or has an unknown schema."""


def _criteria_line(criteria: DetectionCriteria) -> str:
    c = criteria.to_dict()
    return " ".join(f"{k}={c[k]}" for k in sorted(c))


def events_csv(events, criteria: DetectionCriteria) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={EVENTS_SCHEMA}\n")
    buf.write(f"# criteria {_criteria_line(criteria)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for e in events:
        w.writerow([
            e.event_id, e.symbol, e.date, e.direction.value,
            e.start_index, e.change_index, e.end_index,
            e.t_start, e.t_change, e.t_end,
            format_timestamp(e.t_start), format_timestamp(e.t_change), format_timestamp(e.t_end),
            repr(e.s_start), repr(e.s_change), repr(e.s_end), fmt_ratio(e.r_uee),
            e.trade_count, e.trade_count_end, e.duration,
        ])
    return buf.getvalue()


def event_to_dict(e: UeeEvent) -> dict:
    return {
        "event_id": e.event_id, "symbol": e.symbol, "date": e.date, "direction": e.direction.value,
        "start_index": e.start_index, "change_index": e.change_index, "end_index": e.end_index,
        "t_start": e.t_start, "t_change": e.t_change, "t_end": e.t_end,
        "s_start": e.s_start, "s_change": e.s_change, "s_end": e.s_end,
        "r_uee": e.r_uee, "trade_count": e.trade_count, "trade_count_end": e.trade_count_end,
    }


def event_from_dict(d: dict) -> UeeEvent:
    return UeeEvent(
        d["symbol"], d["date"], Direction(d["direction"]),
        int(d["start_index"]), int(d["change_index"]), int(d["end_index"]),
        float(d["s_start"]), float(d["s_change"]), float(d["s_end"]),
        int(d["t_start"]), int(d["t_change"]), int(d["t_end"]),
    )


def events_json(events, criteria: DetectionCriteria) -> str:
    doc = {"schema": EVENTS_SCHEMA, "criteria": criteria.to_dict(),
           "events": [event_to_dict(e) for e in events]}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def read_events(path) -> tuple[DetectionCriteria, list[UeeEvent]]:
    """Load an events CSV written by :func:`events_csv`."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != f"# schema={EVENTS_SCHEMA}":
        raise EventFileError(f"{path}: not a {EVENTS_SCHEMA} file")
    crit = {}
    for tok in lines[1].removeprefix("# criteria ").split():
        k, v = tok.split("=", 1)
        crit[k] = v
    criteria = DetectionCriteria(
        threshold=float(crit["threshold"]), min_trades=int(crit["min_trades"]),
        max_duration=int(crit["max_duration_ns"]), strict=crit["strict"] == "True",
    )
    rows = csv.DictReader(lines[2:])
    events = []
    for row in rows:
        row["t_start"], row["t_change"], row["t_end"] = row["t_start_ns"], row["t_change_ns"], row["t_end_ns"]
        events.append(event_from_dict(row))
    return criteria, events


# ---------------------------------------------------------------------------
# Per-event analytics
# ---------------------------------------------------------------------------


def analytics_record(a: EventAnalytics, recovery: RecoverySeries | None) -> dict:
    """Full-precision record; this is what report generation consumes."""
    e = a.event
    m = a.quote_move
    return {
        "event_id": e.event_id,
        "direction": e.direction.value,
        "r_uee": e.r_uee,
        "accumulated_volume": a.volume.shares,
        "quote_side": None if m is None else m.side.value,
        "largest_quote_return": None if m is None else m.value,
        "quote_updates": None if m is None else m.updates,
        "window_complete": None if a.window is None else a.window.complete,
        "recovery_available": None if recovery is None else recovery.available_n,
    }


def analytics_json(records, criteria: DetectionCriteria, skip_quotes: bool) -> str:
    doc = {"schema": ANALYTICS_SCHEMA, "criteria": criteria.to_dict(), "skip_quotes": skip_quotes,
           "records": records}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def read_analytics(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != ANALYTICS_SCHEMA:
        raise EventFileError(f"{path}: not a {ANALYTICS_SCHEMA} file")
    return doc


def analytics_csv(records, skip_quotes: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["event_id", "direction", "r_uee", "accumulated_volume", "recovery_available"]
    if not skip_quotes:
        cols += ["quote_side", "largest_quote_return", "quote_updates", "window_complete"]
    w.writerow(cols)
    for r in records:
        row = [r["event_id"], r["direction"], fmt_ratio(r["r_uee"]), r["accumulated_volume"],
               r["recovery_available"]]
        if not skip_quotes:
            row += [r["quote_side"] or "", fmt_ratio(r["largest_quote_return"]),
                    "" if r["quote_updates"] is None else r["quote_updates"],
                    "" if r["window_complete"] is None else int(r["window_complete"])]
        w.writerow(row)
    return buf.getvalue()


def windows_csv(windows) -> str:
    """One row per event: completeness flag then spreads at offsets -W..W."""
    windows = list(windows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    width = windows[0].half_width if windows else 0
    w.writerow(["event_id", "direction", "complete", *[f"o{k}" for k in range(-width, width + 1)]])
    for win in windows:
        w.writerow([win.event_id, win.direction.value, int(win.complete), *[fmt_ratio(v) for v in win.values]])
    return buf.getvalue()


def profile_csv(profiles: dict, counts: dict) -> str:
    """``profiles`` maps a series name ("all", "crash", "spike") to a mean profile or None."""
    names = [k for k in ("all", "crash", "spike") if k in profiles]
    width = next((len(p) for p in profiles.values() if p is not None), 1) // 2
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["# complete_windows", *[f"{k}={counts[k]}" for k in names]])
    w.writerow(["offset", *names])
    for i, off in enumerate(range(-width, width + 1)):
        w.writerow([off, *[fmt_ratio(profiles[k][i]) if profiles[k] is not None else "" for k in names]])
    return buf.getvalue()


def recovery_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["event_id", "direction", "n", "eta"])
    for s in series:
        for n, eta in enumerate(s.eta, start=1):
            w.writerow([s.event_id, s.direction.value, n, fmt_ratio(eta)])
    return buf.getvalue()


def curves_csv(curves: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["direction", "n", "samples", "high_count", "mid_count", "low_count", "p_high", "p_mid", "p_low"])
    for d in Direction:
        c: RecoveryCurves = curves[d]
        for i, n in enumerate(c.n):
            w.writerow([d.value, int(n), int(c.samples[i]), int(c.high_count[i]), int(c.mid_count[i]),
                        int(c.low_count[i]), fmt_ratio(c.p_high[i]), fmt_ratio(c.p_mid[i]),
                        fmt_ratio(c.p_low[i])])
    return buf.getvalue()


def curves_to_dict(curves: dict) -> dict:
    def clean(a):
        return [None if math.isnan(x) else float(x) for x in np.asarray(a, dtype=float)]

    return {
        d.value: {
            "high": c.high, "low": c.low, "samples": c.samples.tolist(),
            "high_count": c.high_count.tolist(), "low_count": c.low_count.tolist(),
            "p_high": clean(c.p_high), "p_low": clean(c.p_low),
        }
        for d, c in curves.items()
    }
