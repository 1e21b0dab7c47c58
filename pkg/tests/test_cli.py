import csv
import json
from pathlib import Path

import pytest

from ueekit.cli import main
from ueekit.export import read_events
from ueekit.synth import GroundTruth

BOTH = ["--max-duration", "1.5s", "--max-duration", "2.0s"]


def outputs(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    assert main(["synth", "--seed", "11", "--out", str(root), "--days", "2", "--symbols", "AAA,BBB"]) == 0
    return root


@pytest.fixture(scope="module")
def small_run(small):
    out = small / "run"
    assert main(["run", "--trades", str(small / "trades"), "--quotes", str(small / "quotes"), *BOTH,
                 "--out", str(out)]) == 0
    return out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_fixture_run_matches_ground_truth(suite_dir, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--trades", str(suite_dir / "trades"), "--quotes", str(suite_dir / "quotes"), *BOTH,
                 "--out", str(out)]) == 0
    gt = GroundTruth.from_json((suite_dir / "ground_truth.json").read_text())
    for label in ("1.5s", "2.0s"):
        _, events = read_events(out / f"events_{label}.csv")
        got = {(e.symbol, e.date, e.start_index, e.change_index, e.end_index, e.direction.value) for e in events}
        want = {(p.symbol, p.date, p.start_index, p.change_index(label), p.end_index, p.direction.value)
                for p in gt.positives(label)}
        assert got == want
    m = manifest(out)
    assert m["status"] == "complete"
    assert m["stages"]["detect"]["subset_checks"] == {"1.5s in 2.0s": True}
    for name, digest in m["stages"]["analyze"]["outputs"].items():
        assert (out / name).exists() and len(digest) == 64


def test_empty_input_directory(tmp_path):
    (tmp_path / "in").mkdir()
    out = tmp_path / "out"
    assert main(["detect", "--trades", str(tmp_path / "in"), "--out", str(out)]) == 0
    rows = [r for r in (out / "events_1.5s.csv").read_text().splitlines() if not r.startswith("#")]
    assert len(rows) == 1  # header only
    assert manifest(out)["stages"]["detect"]["event_counts"] == {"1.5s": 0}
    assert main(["analyze", "--skip-quotes", "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text().splitlines()[1].startswith("1.5s,0,0,")


def test_detect_then_analyze_matches_run(small, small_run, tmp_path):
    out = tmp_path / "split"
    assert main(["detect", "--trades", str(small / "trades"), *BOTH, "--out", str(out)]) == 0
    assert main(["analyze", "--quotes", str(small / "quotes"), "--out", str(out)]) == 0
    assert outputs(out) == outputs(small_run)


def test_workers_do_not_change_outputs(small, small_run, tmp_path):
    out = tmp_path / "par"
    assert main(["run", "--trades", str(small / "trades"), "--quotes", str(small / "quotes"), *BOTH,
                 "--workers", "3", "--out", str(out)]) == 0
    assert outputs(out) == outputs(small_run)


def test_skip_quotes(small, tmp_path):
    out = tmp_path / "nq"
    assert main(["run", "--trades", str(small / "trades"), "--skip-quotes", "--out", str(out)]) == 0
    names = set(outputs(out))
    assert "recovery_curves_1.5s.csv" in names and "summary.csv" in names
    assert not any(n.startswith(("spread_", "thresholds_", "volume_return_", "validation_quotes")) for n in names)
    header = (out / "analytics_1.5s.csv").read_text().splitlines()[0]
    assert "largest_quote_return" not in header


def test_missing_quotes_is_fatal(small, tmp_path, capsys):
    out = tmp_path / "mq"
    assert main(["run", "--trades", str(small / "trades"), "--out", str(out)]) == 1
    m = manifest(out)
    assert m["status"] == "incomplete"
    assert m["stages"]["detect"]["status"] == "complete"
    assert m["stages"]["analyze"]["status"] == "incomplete" and "--quotes" in m["stages"]["analyze"]["error"]
    assert "error" in capsys.readouterr().err


def test_missing_trade_path_is_fatal(tmp_path):
    out = tmp_path / "o"
    assert main(["detect", "--trades", str(tmp_path / "absent"), "--out", str(out)]) == 1
    assert manifest(out)["stages"]["detect"]["status"] == "incomplete"


@pytest.mark.parametrize("argv", [
    ["synth", "--seed", "x", "--out", "o"],
    ["synth", "--out", "o"],
    ["detect", "--trades", "t", "--threshold", "2", "--out", "o"],
    ["run", "--trades", "t", "--window", "0", "--out", "o"],
    ["bogus"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_universe_filter(small, tmp_path):
    uni = tmp_path / "universe.csv"
    uni.write_text("symbol,company,sector\nBBB,Bravo Corp,Industrials\n")
    out = tmp_path / "u"
    assert main(["detect", "--trades", str(small / "trades"), "--universe", str(uni), "--out", str(out)]) == 0
    _, events = read_events(out / "events_1.5s.csv")
    assert events and {e.symbol for e in events} == {"BBB"}
    assert manifest(out)["stages"]["detect"]["universe_size"] == 1

    empty = tmp_path / "empty.csv"
    empty.write_text("symbol,company,sector\n")
    assert main(["detect", "--trades", str(small / "trades"), "--universe", str(empty), "--out", str(out)]) == 1


def test_report_subcommand_rebuilds_tables(small_run, tmp_path):
    import shutil

    out = tmp_path / "rep"
    shutil.copytree(small_run, out)
    before = outputs(out)
    assert main(["report", "--out", str(out)]) == 0
    after = outputs(out)
    for name in ("summary.csv", "weekly_1.5s.csv", "thresholds_2.0s.csv", "volume_return_1.5s.csv"):
        assert after[name] == before[name]
    m = manifest(out)
    assert m["stages"]["report"]["status"] == "complete" and m["status"] == "complete"


def test_report_without_detect_is_fatal(tmp_path):
    assert main(["report", "--out", str(tmp_path / "none")]) == 1


def test_summary_consistent_with_events(small_run):
    rows = list(csv.DictReader((small_run / "summary.csv").open()))
    for row in rows:
        _, events = read_events(small_run / f"events_{row['criterion']}.csv")
        assert int(row["total"]) == len(events)
        assert int(row["spikes"]) == sum(e.direction.value == "spike" for e in events)


def test_strict_flag_recorded(small, tmp_path):
    out = tmp_path / "s"
    assert main(["detect", "--trades", str(small / "trades"), "--strict-monotonic", "--out", str(out)]) == 0
    crit, _ = read_events(out / "events_1.5s.csv")
    assert crit.strict
