"""Throughput benchmark: ingest + detect over a synthetic multi-file tape."""

from __future__ import annotations

import datetime as dt
import json
import os
import time
from pathlib import Path

import numpy as np

from .detect import DEFAULT_CRITERIA, detect_events
from .ingest import MAIN_OPEN, NS_PER_HOUR, TradeStream, parse_trades, write_trades
from .pipeline import DetectUnit, detect_file, run_units

SYMBOLS_PER_FILE = 4


def synthetic_tape(out_dir, n_trades: int, files: int = 8, seed: int = 0) -> list[Path]:
    """Write ``files`` daily trade files holding ``n_trades`` rows in total."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    per_file = np.full(files, n_trades // files)
    per_file[: n_trades % files] += 1
    day = dt.date(2021, 1, 4)
    paths = []
    for f, n in enumerate(per_file):
        while day.weekday() >= 5:
            day += dt.timedelta(days=1)
        per_sym = np.full(SYMBOLS_PER_FILE, n // SYMBOLS_PER_FILE)
        per_sym[: n % SYMBOLS_PER_FILE] += 1
        streams = []
        for s, m in enumerate(per_sym):
            span = 6.5 * NS_PER_HOUR
            ts = MAIN_OPEN + np.sort(rng.integers(0, int(span), m))
            steps = rng.choice([-1, 0, 1], m) * 0.0002
            price = 50.0 * np.exp(np.cumsum(steps))
            streams.append(TradeStream.from_arrays(ts, price, rng.integers(1, 50, m) * 100,
                                                   symbol=f"S{f}{s:02d}", date=day.isoformat()))
        path = out / f"{day.isoformat()}.csv"
        write_trades(streams, path)
        paths.append(path)
        day += dt.timedelta(days=1)
    return paths


def time_serial(paths, criteria=DEFAULT_CRITERIA) -> dict:
    """Single-threaded ingest and detect, timed separately."""
    t_ingest = t_detect = 0.0
    trades = events = 0
    for p in paths:
        t0 = time.perf_counter()
        streams, _ = parse_trades(p)
        t1 = time.perf_counter()
        for s in streams.values():
            events += len(detect_events(s, criteria))
            trades += len(s)
        t_detect += time.perf_counter() - t1
        t_ingest += t1 - t0
    return {"trades": trades, "events": events, "ingest_seconds": round(t_ingest, 3),
            "detect_seconds": round(t_detect, 3), "total_seconds": round(t_ingest + t_detect, 3)}


def time_pool(paths, workers: int, criteria=DEFAULT_CRITERIA) -> float:
    units = [DetectUnit(p, criteria=(criteria,)) for p in paths]
    t0 = time.perf_counter()
    run_units(detect_file, units, workers)
    return time.perf_counter() - t0


def run_benchmark(n_trades: int, out_dir, files: int = 8, workers=(1, 2, 4), seed: int = 0) -> dict:
    """Generate the tape, time it serially and under each worker count, write ``bench_manifest.json``."""
    out = Path(out_dir)
    paths = synthetic_tape(out / "tape", n_trades, files, seed)
    serial = time_serial(paths)
    pool = {str(w): round(time_pool(paths, w), 3) for w in workers}
    base = pool[str(min(workers))]
    result = {
        "trades": n_trades,
        "files": files,
        "cpu_count": os.cpu_count(),
        "usable_cpus": len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count(),
        "serial": serial,
        "pool_seconds": pool,
        "speedup": {w: round(base / t, 3) for w, t in pool.items()},
    }
    (out / "bench_manifest.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    return result
