"""Command-line entry point: ``ueekit synth|detect|analyze|report|run|bench``.

Stages chain through ``manifest.json`` in the output directory.  ``detect``
writes one events file per criterion, ``analyze`` reads them back and adds
per-event analytics, recovery curves and report tables, ``report`` rebuilds
the tables alone.  ``run`` is ``detect`` followed by ``analyze`` and leaves
byte-identical files.

Exit status is 0 on success, 1 on a fatal error (the manifest is then
marked incomplete) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .detect import DetectionCriteria, Direction, parse_duration
from .export import (
    analytics_csv,
    analytics_json,
    analytics_record,
    curves_csv,
    curves_to_dict,
    events_csv,
    events_json,
    profile_csv,
    read_analytics,
    read_events,
    recovery_csv,
    windows_csv,
)
from .ingest import CANONICAL, FormatDescriptor, IngestError, ValidationReport
from .pipeline import (
    AnalyzeUnit,
    DetectUnit,
    analyze_file,
    detect_file,
    expand_inputs,
    quote_files_for,
    run_units,
    sha256_file,
)
from .quotes import EmptyProfileError, average_spread_profile
from .recovery import recovery_curves
from .report import (
    THRESHOLDS,
    cluster_table,
    fmt_ratio,
    hist1d_csv,
    hist2d_csv,
    intraday_csv,
    intraday_histogram,
    return_histograms,
    summary_csv,
    summary_table,
    to_json,
    volume_return_hist2d,
    weekly_csv,
    weekly_histogram,
)

MANIFEST = "manifest.json"
MANIFEST_SCHEMA = "ueekit.manifest/1"


class FatalError(Exception):
    """Aborts the current stage; reported on stderr with exit status 1."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def load_universe(path) -> dict:
    """Symbol universe file: CSV with ``symbol,company,sector`` columns."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise FatalError(f"cannot read universe file {path}: {exc}") from exc
    if rows and "symbol" not in rows[0]:
        raise FatalError(f"universe file {path} has no 'symbol' column")
    universe = {r["symbol"].strip(): (r.get("company", ""), r.get("sector", "")) for r in rows if r["symbol"].strip()}
    if not universe:
        raise FatalError(f"universe file {path} lists no symbols")
    return universe


def criteria_from_args(args) -> list[DetectionCriteria]:
    durations = args.max_duration or ["1.5s"]
    out = []
    for d in durations:
        c = DetectionCriteria(args.threshold, args.min_trades, parse_duration(d), args.strict_monotonic)
        if c.label in {x.label for x in out}:
            raise FatalError(f"duplicate --max-duration {d}")
        out.append(c)
    return out


def _format(path) -> FormatDescriptor:
    if path is None:
        return CANONICAL
    try:
        return FormatDescriptor.load(path)
    except IngestError as exc:
        raise FatalError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


class Manifest:
    """Stage records in ``<out>/manifest.json``; rewritten after every stage."""

    def __init__(self, out: Path):
        self.out = out
        self.path = out / MANIFEST
        self.doc = {"schema": MANIFEST_SCHEMA, "tool": "ueekit", "version": __version__, "stages": {}}
        if self.path.exists():
            try:
                self.doc = json.loads(self.path.read_text())
            except json.JSONDecodeError as exc:
                raise FatalError(f"corrupt manifest {self.path}: {exc}") from exc

    def stage(self, name: str) -> dict | None:
        return self.doc["stages"].get(name)

    def begin(self, name: str, config: dict) -> dict:
        rec = {"status": "incomplete", "config": config, "inputs": {}, "outputs": {}}
        self.doc["stages"][name] = rec
        # later stages depend on this one; drop their stale records
        order = ["detect", "analyze", "report"]
        if name in order:
            for later in order[order.index(name) + 1:]:
                self.doc["stages"].pop(later, None)
        self._refresh()
        return rec

    def write(self, name: str, filename: str, text: str) -> None:
        p = self.out / filename
        p.write_text(text)
        self.doc["stages"][name]["outputs"][filename] = sha256_file(p)

    def fail(self, name: str, message: str) -> None:
        rec = self.doc["stages"].setdefault(name, {"outputs": {}})
        rec["status"] = "incomplete"
        rec["error"] = message
        self._refresh()

    def finish(self, name: str) -> None:
        self.doc["stages"][name]["status"] = "complete"
        self._refresh()

    def _refresh(self) -> None:
        stages = self.doc["stages"]
        self.doc["status"] = "complete" if stages and all(s["status"] == "complete" for s in stages.values()) \
            else "incomplete"
        self.out.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.doc, indent=1, sort_keys=True) + "\n")


def _inputs(files) -> dict:
    return {str(f): sha256_file(f) for f in files}


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    from .synth import fixture_suite, write_corpus

    out = Path(args.out)
    t0 = time.perf_counter()
    corpus = fixture_suite(args.seed, symbols=tuple(args.symbols.split(",")), first_date=args.first_date,
                           n_days=args.days)
    files = write_corpus(corpus, out)
    truth = corpus.truth
    print(f"wrote {len(files)} files to {out}: {len(truth.positives())} positives, "
          f"{len(truth.negatives())} negatives ({time.perf_counter() - t0:.1f}s)")
    return 0


def cmd_detect(args) -> int:
    out = Path(args.out)
    man = Manifest(out)
    criteria = criteria_from_args(args)
    config = {
        "trades": [str(p) for p in args.trades or []],
        "format": args.format,
        "universe": args.universe,
        "criteria": [c.to_dict() for c in criteria],
        "labels": [c.label for c in criteria],
    }
    man.begin("detect", config)
    try:
        fmt = _format(args.format)
        files = expand_inputs(args.trades)
        rec = man.stage("detect")
        rec["inputs"] = _inputs(files)
        universe = None
        if args.universe:
            universe = load_universe(args.universe)
            rec["inputs"][str(args.universe)] = sha256_file(args.universe)
            rec["universe_size"] = len(universe)
        t0 = time.perf_counter()
        units = [DetectUnit(f, fmt, tuple(criteria), frozenset(universe) if universe else None) for f in files]
        results = run_units(detect_file, units, args.workers)
        elapsed = time.perf_counter() - t0

        seen = {}
        for r in results:
            for key in r.streams:
                if key in seen:
                    raise FatalError(f"symbol-day {key[0]} {key[1]} appears in both {seen[key]} and {r.path}")
                seen[key] = r.path
        report = ValidationReport("trades")
        for r in results:
            report = report.merge(r.report)
        events = {c.label: [] for c in criteria}
        for r in results:
            for label, evs in r.events.items():
                events[label].extend(evs)
        for label in events:
            events[label].sort(key=lambda e: (e.date, e.symbol, e.start_index, e.direction.sign))

        for c in criteria:
            man.write("detect", f"events_{c.label}.csv", events_csv(events[c.label], c))
            man.write("detect", f"events_{c.label}.json", events_json(events[c.label], c))
        man.write("detect", "validation_trades.json", report.to_json())
        man.write("detect", "validation_trades.txt", report.to_text())

        rec["streams"] = {str(r.path): [list(k) for k in r.streams] for r in results}
        dates = sorted({k[1] for k in seen})
        rec["dates"] = [dates[0], dates[-1]] if dates else []
        rec["event_counts"] = {label: len(v) for label, v in events.items()}
        rec["subset_checks"] = _subset_checks(criteria, events)
        if args.timing:
            rec["timing"] = {"seconds": round(elapsed, 3), "trades": sum(r.trades for r in results),
                             "workers": args.workers}
        man.finish("detect")
        print(f"detect: {len(files)} file(s), {len(seen)} symbol-day(s), "
              + ", ".join(f"{k}: {v} events" for k, v in rec["event_counts"].items()))
        return 0
    except (FatalError, IngestError, ValueError) as exc:
        man.fail("detect", str(exc))
        raise FatalError(str(exc)) from exc


def _subset_checks(criteria, events) -> dict:
    """For criteria differing only in max_duration, the shorter one's events must be a subset."""
    checks = {}
    for a in criteria:
        for b in criteria:
            same = (a.threshold, a.min_trades, a.strict) == (b.threshold, b.min_trades, b.strict)
            if same and a.max_duration < b.max_duration:
                ok = set(events[a.label]) <= set(events[b.label])
                checks[f"{a.label} in {b.label}"] = ok
                if not ok:
                    print(f"warning: {a.label} events are not a subset of {b.label} events", file=sys.stderr)
    return checks


def _analysis_config(args) -> dict:
    return {
        "window": args.window,
        "nmax": args.nmax,
        "skip_quotes": args.skip_quotes,
        "bin_minutes": args.bin_minutes,
        "session_clip": not args.no_session_clip,
        "changes_only": args.changes_only,
        "recovery_cutoffs": [0.8, 0.2],
        "thresholds": list(THRESHOLDS),
    }


def cmd_analyze(args) -> int:
    out = Path(args.out)
    man = Manifest(out)
    det = man.stage("detect")
    config = _analysis_config(args)
    config["quotes"] = [str(p) for p in args.quotes or []]
    config["quote_format"] = args.quote_format
    man.begin("analyze", config)
    try:
        if det is None or det.get("status") != "complete":
            raise FatalError(f"no completed detect stage in {out / MANIFEST}")
        trade_files = [Path(p) for p in det["streams"]]
        fmt = _format(det["config"]["format"])
        qfmt = _format(args.quote_format or det["config"]["format"])
        if not args.skip_quotes:
            if not args.quotes:
                raise FatalError("quote analytics requested but no --quotes given (use --skip-quotes)")
            quote_files = expand_inputs(args.quotes)
        else:
            quote_files = []
        rec = man.stage("analyze")
        rec["inputs"] = _inputs(trade_files + quote_files)

        labels = det["config"]["labels"]
        events = {}
        criteria = {}
        for label in labels:
            criteria[label], events[label] = read_events(out / f"events_{label}.csv")
            rec["inputs"][f"events_{label}.csv"] = sha256_file(out / f"events_{label}.csv")
        window_opts = {"clip_to_session": not args.no_session_clip, "changes_only": args.changes_only}
        units = []
        for tf in trade_files:
            keys = {tuple(k) for k in det["streams"][str(tf)]}
            mine = {label: [e for e in events[label] if (e.symbol, e.date) in keys] for label in labels}
            units.append(AnalyzeUnit(tf, tuple(quote_files_for(tf, quote_files)), mine, fmt, qfmt,
                                     args.window, args.nmax, args.skip_quotes, window_opts))
        results = run_units(analyze_file, units, args.workers)

        qreport = None
        for r in results:
            if r.quote_report is not None:
                qreport = r.quote_report if qreport is None else qreport.merge(r.quote_report)
        if not args.skip_quotes:
            qreport = qreport or ValidationReport("quotes")
            man.write("analyze", "validation_quotes.json", qreport.to_json())
            man.write("analyze", "validation_quotes.txt", qreport.to_text())

        docs = {}
        for label in labels:
            analytics = [a for r in results for a in r.analytics[label]]
            series = [s for r in results for s in r.recovery[label]]
            order = sorted(range(len(analytics)), key=lambda i: _event_key(analytics[i].event))
            analytics = [analytics[i] for i in order]
            series = [series[i] for i in order]
            records = [analytics_record(a, s) for a, s in zip(analytics, series)]
            man.write("analyze", f"analytics_{label}.csv", analytics_csv(records, args.skip_quotes))
            man.write("analyze", f"analytics_{label}.json", analytics_json(records, criteria[label], args.skip_quotes))
            curves = recovery_curves(series, 0.8, 0.2, n_max=args.nmax)
            man.write("analyze", f"recovery_{label}.csv", recovery_csv(series))
            man.write("analyze", f"recovery_curves_{label}.csv", curves_csv(curves))
            man.write("analyze", f"recovery_curves_{label}.json", to_json(curves_to_dict(curves)))
            if not args.skip_quotes:
                windows = [a.window for a in analytics if a.window is not None]
                man.write("analyze", f"spread_windows_{label}.csv", windows_csv(windows))
                profiles, counts = _profiles(windows, args.window)
                man.write("analyze", f"spread_profile_{label}.csv", profile_csv(profiles, counts))
            docs[label] = json.loads(analytics_json(records, criteria[label], args.skip_quotes))
        write_reports(man, "analyze", events, docs, det.get("dates", []), args.bin_minutes)
        man.finish("analyze")
        print("analyze: " + ", ".join(f"{k}: {len(v)} events" for k, v in events.items()))
        return 0
    except (FatalError, IngestError, ValueError, OSError) as exc:
        man.fail("analyze", str(exc))
        raise FatalError(str(exc)) from exc


def _event_key(e):
    return (e.date, e.symbol, e.start_index, e.direction.sign)


def _profiles(windows, half_width):
    groups = {
        "all": windows,
        "crash": [w for w in windows if w.direction is Direction.FLASH_CRASH],
        "spike": [w for w in windows if w.direction is Direction.FLASH_SPIKE],
    }
    profiles, counts = {}, {}
    for name, ws in groups.items():
        counts[name] = sum(w.complete for w in ws)
        try:
            profiles[name] = average_spread_profile(ws)
        except EmptyProfileError:
            profiles[name] = None
    return profiles, counts


def write_reports(man: Manifest, stage: str, events: dict, analytics_docs: dict, dates, bin_minutes: int) -> None:
    """Summary table plus per-criterion histograms and cluster counts."""
    man.write(stage, "summary.csv", summary_csv(summary_table(events)))
    rows = summary_table(events)
    man.write(stage, "summary.json", to_json([
        {"criterion": r.label, "total": r.total, "spikes": r.spikes, "crashes": r.crashes,
         "spike_share": r.spike_share, "crash_share": r.crash_share} for r in rows]))
    first, last = (dates + [None, None])[:2] if dates else (None, None)
    for label, evs in events.items():
        doc = analytics_docs.get(label)
        weekly = weekly_histogram(evs, first, last)
        intraday = intraday_histogram(evs, bin_minutes)
        clusters = cluster_table(evs)
        man.write(stage, f"weekly_{label}.csv", weekly_csv(weekly))
        man.write(stage, f"intraday_{label}.csv", intraday_csv(intraday))
        man.write(stage, f"clusters_{label}.csv", _clusters_csv(clusters))
        structured = {
            "criterion": label,
            "weekly": [[y, w, c] for (y, w), c in weekly],
            "intraday": {"bin_minutes": bin_minutes, "counts": intraday.counts.tolist(),
                         "out_of_range": intraday.out_of_range},
            "clusters": {"max_daily_count": clusters["max_daily_count"],
                         "max_daily_date": clusters["max_daily_date"],
                         "per_day": clusters["per_day"]},
        }
        quotes_done = doc is not None and not doc["skip_quotes"]
        by_id = {r["event_id"]: r for r in doc["records"]} if doc is not None else {}
        moves = [_Move(by_id[e.event_id]["largest_quote_return"]) if quotes_done and
                 by_id[e.event_id]["largest_quote_return"] is not None else None for e in evs]
        hist = return_histograms(evs, moves)
        series = {f"r_uee_{d.value}": hist.uee[d] for d in Direction}
        if quotes_done:
            series.update({f"quote_{d.value}": hist.quote[d] for d in Direction})
            thresholds = [[k.value if isinstance(k, Direction) else k, cut, hist.threshold_count[(k, cut)],
                           hist.quote_samples[k], fmt_ratio(hist.threshold_fraction[(k, cut)])]
                          for k in [Direction.FLASH_CRASH, Direction.FLASH_SPIKE, "all"] for cut in THRESHOLDS]
            man.write(stage, f"thresholds_{label}.csv", _thresholds_csv(thresholds))
            h2 = volume_return_hist2d((r["accumulated_volume"], r["largest_quote_return"]) for r in doc["records"])
            man.write(stage, f"volume_return_{label}.csv", hist2d_csv(h2))
            structured["thresholds"] = [
                {"series": t[0], "cutoff": t[1], "count": t[2], "samples": t[3]} for t in thresholds]
            structured["volume_return"] = {"out_of_range": h2.out_of_range, "missing": h2.missing,
                                           "total": int(h2.counts.sum())}
        man.write(stage, f"returns_{label}.csv", hist1d_csv(series))
        man.write(stage, f"report_{label}.json", to_json(structured))


class _Move:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


def _clusters_csv(c) -> str:
    lines = [f"# max_daily_count,{c['max_daily_count']},{c['max_daily_date']}", "symbol,date,count"]
    lines += [f"{s},{d},{n}" for (s, d), n in c["per_symbol_day"]]
    return "\n".join(lines) + "\n"


def _thresholds_csv(rows) -> str:
    lines = ["series,cutoff,count,samples,fraction"]
    lines += [f"{s},{cut},{n},{m},{f}" for s, cut, n, m, f in rows]
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    out = Path(args.out)
    man = Manifest(out)
    det = man.stage("detect")
    man.begin("report", {"bin_minutes": args.bin_minutes})
    try:
        if det is None or det.get("status") != "complete":
            raise FatalError(f"no completed detect stage in {out / MANIFEST}")
        events, docs = {}, {}
        for label in det["config"]["labels"]:
            _, events[label] = read_events(out / f"events_{label}.csv")
            ap = out / f"analytics_{label}.json"
            if ap.exists():
                docs[label] = read_analytics(ap)
        write_reports(man, "report", events, docs, det.get("dates", []), args.bin_minutes)
        man.finish("report")
        print(f"report: {sum(len(v) for v in events.values())} events across {len(events)} criteria")
        return 0
    except (FatalError, ValueError, OSError) as exc:
        man.fail("report", str(exc))
        raise FatalError(str(exc)) from exc


def cmd_run(args) -> int:
    cmd_detect(args)
    return cmd_analyze(args)


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    result = run_benchmark(args.trades_total, Path(args.out), files=args.files,
                           workers=tuple(int(w) for w in args.worker_counts.split(",")), seed=args.seed)
    print(json.dumps(result, indent=1, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _threshold(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("threshold must be in (0, 1)")
    return v


def _add_detect_args(p):
    p.add_argument("--trades", nargs="+", metavar="PATH", help="trade files or directories")
    p.add_argument("--format", help="format descriptor file (default: canonical CSV)")
    p.add_argument("--universe", help="CSV with symbol,company,sector; only these symbols are scanned")
    p.add_argument("--threshold", type=_threshold, default=0.008, help="minimum relative move (default 0.008)")
    p.add_argument("--min-trades", type=_positive_int, default=11, help="minimum trades to t_change (default 11)")
    p.add_argument("--max-duration", action="append", metavar="DUR",
                   help="duration limit such as 1.5s or 2.0s; repeat for several criteria (default 1.5s)")
    p.add_argument("--strict-monotonic", action="store_true", help="equal consecutive prices end a run")
    p.add_argument("--timing", action="store_true", help="record wall-clock timing in the manifest")


def _add_analysis_args(p):
    p.add_argument("--quotes", nargs="+", metavar="PATH", help="quote files or directories")
    p.add_argument("--quote-format", help="format descriptor for quote files (default: --format)")
    p.add_argument("--window", type=_positive_int, default=400, help="spread window half width W (default 400)")
    p.add_argument("--nmax", type=_positive_int, default=100, help="recovery horizon in trades (default 100)")
    p.add_argument("--skip-quotes", action="store_true", help="omit all quote analytics")
    p.add_argument("--no-session-clip", action="store_true", help="let spread windows cross session boundaries")
    p.add_argument("--changes-only", action="store_true", help="count only quotes that change the spread")
    p.add_argument("--bin-minutes", type=_positive_int, default=5, help="intraday histogram bin width")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ueekit", description="Detect and analyse ultrafast extreme events in tick data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic fixture corpus with ground truth")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--symbols", default="AAL,MSFT,JNJ")
    p.add_argument("--first-date", default="2021-01-04")
    p.add_argument("--days", type=_positive_int, default=10)
    p.set_defaults(func=cmd_synth)

    for name, helptext, func, adders in (
        ("detect", "ingest trades and write event files", cmd_detect, (_add_detect_args,)),
        ("analyze", "per-event analytics, recovery curves and reports", cmd_analyze, (_add_analysis_args,)),
        ("run", "detect followed by analyze", cmd_run, (_add_detect_args, _add_analysis_args)),
    ):
        p = sub.add_parser(name, help=helptext)
        for add in adders:
            add(p)
        p.add_argument("--out", required=True, help="output directory (holds the manifest)")
        p.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default 1)")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="rebuild report tables from existing event files")
    p.add_argument("--out", required=True)
    p.add_argument("--bin-minutes", type=_positive_int, default=5)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench", help="time ingest + detect on a synthetic tape")
    p.add_argument("--out", required=True)
    p.add_argument("--trades-total", type=_positive_int, default=10_000_000)
    p.add_argument("--files", type=_positive_int, default=8)
    p.add_argument("--worker-counts", default="1,2,4")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FatalError as exc:
        print(f"ueekit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
