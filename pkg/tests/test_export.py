import json
from pathlib import Path

import pytest

from ueekit.detect import DEFAULT_CRITERIA, DetectionCriteria, detect_events
from ueekit.export import EventFileError, events_csv, events_json, read_events
from ueekit.ingest import IngestError
from ueekit.pipeline import expand_inputs, quote_files_for, run_units, sha256_file
from ueekit.synth import stress_stream


def test_events_csv_round_trip(tmp_path):
    events = [e for k in range(5) for e in detect_events(stress_stream(k, 3000))]
    assert events
    crit = DetectionCriteria(0.008, 11, 2_000_000_000, True)
    p = tmp_path / "ev.csv"
    p.write_text(events_csv(events, crit))
    back_crit, back = read_events(p)
    assert back_crit == crit
    assert back == events
    assert [e.r_uee for e in back] == [e.r_uee for e in events]


def test_events_json_is_stable():
    events = detect_events(stress_stream(1, 2000))
    a = events_json(events, DEFAULT_CRITERIA)
    assert a == events_json(events, DEFAULT_CRITERIA)
    doc = json.loads(a)
    assert doc["criteria"]["max_duration_ns"] == 1_500_000_000 and len(doc["events"]) == len(events)


def test_read_events_rejects_other_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(EventFileError):
        read_events(p)


def test_expand_inputs(tmp_path):
    (tmp_path / "d").mkdir()
    for name in ("b.csv", "a.csv", ".hidden"):
        (tmp_path / "d" / name).write_text("x")
    single = tmp_path / "one.csv"
    single.write_text("y")
    got = expand_inputs([tmp_path / "d", single])
    assert [p.name for p in got] == ["a.csv", "b.csv", "one.csv"]
    assert expand_inputs(None) == []
    with pytest.raises(IngestError):
        expand_inputs([tmp_path / "missing"])


def test_quote_files_matched_by_date():
    q = [Path("q/2021-01-04.csv"), Path("q/2021-01-05.csv"), Path("q/all.csv")]
    assert quote_files_for(Path("t/2021-01-05.csv"), q) == [q[1], q[2]]
    assert quote_files_for(Path("t/trades.csv"), q) == q


def test_sha256_file(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def _square(x):
    return x * x


@pytest.mark.parametrize("workers", [1, 2])
def test_run_units_preserves_order(workers):
    assert run_units(_square, list(range(10)), workers) == [x * x for x in range(10)]
