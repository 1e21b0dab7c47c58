import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from naive_parser import check_trade_lines, count_crossed, ts_ns
from ueekit.ingest import (
    CANONICAL,
    FormatDescriptor,
    IngestError,
    OutOfSessionError,
    QuoteRecord,
    QuoteStream,
    TradeRecord,
    TradeStream,
    TradingSession,
    ValidationReport,
    format_quote,
    format_timestamp,
    format_trade,
    parse_quotes,
    parse_timestamp,
    parse_trades,
    session_of,
    write_quotes,
    write_trades,
)

HEADER = b"timestamp,symbol,price,volume\n"
QHEADER = b"timestamp,symbol,bid,bid_size,ask,ask_size\n"
DAY = "2021-01-04"


def hms(h, m, s, ns=0):
    return ((h * 60 + m) * 60 + s) * 10**9 + ns


class TestParseTrades:
    def test_empty_file(self):
        streams, report = parse_trades(b"", date=DAY)
        assert streams == {}
        assert (report.total, report.accepted, report.rejected_total) == (0, 0, 0)

    def test_header_only(self):
        streams, report = parse_trades(HEADER, date=DAY)
        assert streams == {} and report.total == 0

    def test_single_line(self):
        streams, report = parse_trades(HEADER + b"09:30:00.000000001,MSFT,36.41,100\n", date=DAY)
        (key, s), = streams.items()
        assert key == ("MSFT", DAY)
        assert s[0] == TradeRecord(34200000000001, "MSFT", 36.41, 100, 0)
        assert report.accepted == report.total == 1

    def test_corrupted_fixture_against_naive_checker(self):
        rng = np.random.default_rng(5)
        t = hms(9, 30, 0) + np.cumsum(rng.integers(1, 10**8, 1000))
        lines = [f"{format_timestamp(int(x))},{'AB'[i % 2]},{100 + rng.integers(-50, 50) / 100},{rng.integers(1, 9) * 100}"
                 for i, x in enumerate(t)]
        corrupt = {
            3: "09:3X:00.1,A,100.0,100",
            50: "09:30:00.1,A,abc,100",
            97: "",
            140: lines[140].replace(",100", ",100,7") if ",100" in lines[140] else lines[140] + ",7",
            188: "09:30:00.000000001,A,100.0",
            230: lines[230].rsplit(",", 1)[0] + ",0",
            275: lines[275].rsplit(",", 1)[0] + ",-5",
            310: lines[310].split(",")[0] + "," + lines[310].split(",")[1] + ",-1.5,100",
            366: lines[366].split(",")[0] + "," + lines[366].split(",")[1] + ",0,100",
            402: "04:00:00.5," + lines[402].split(",", 1)[1],  # regresses far back in time
            455: lines[455].split(",")[0] + ",A,nan,100",
            503: lines[503].split(",")[0] + ",A,100.0,1e2",
            560: "25:00:00,A,100.0,100",
            611: lines[611].split(",")[0] + ",,100.0,100",
            680: "04:10:00," + lines[680].split(",", 1)[1],
            777: lines[777].split(",")[0] + ",A,100.0,100.0",
            901: "09:30:00.1234567891,A,100.0,100",
        }
        for i, text in corrupt.items():
            lines[i] = text
        data = HEADER + ("\n".join(lines) + "\n").encode()
        _, want = check_trade_lines(lines)
        streams, report = parse_trades(data, date=DAY)
        assert report.total == 1000
        assert report.rejected_total == 17
        assert report.accepted == 983
        assert dict(report.rejected) == want
        assert sum(len(s) for s in streams.values()) == 983

    def test_accepted_records_match_naive_checker(self):
        lines = ["09:30:00.5,A,10.5,100", "09:30:00.4,A,10.6,100", "09:30:00.5,B,1,1",
                 "09:30:00.7,A,10.7,200", "09:30:00.6,A,10.8,100", "09:30:00.7,A,10.9,300"]
        accepted, _ = check_trade_lines(lines)
        streams, _ = parse_trades(HEADER + "\n".join(lines).encode(), date=DAY)
        got = sorted((int(r.timestamp), r.symbol, r.price, r.volume) for s in streams.values() for r in s)
        assert got == sorted(accepted)

    def test_ties_keep_file_order(self):
        data = HEADER + b"09:30:00.5,A,10.0,100\n09:30:00.5,A,10.1,100\n09:30:00.5,A,9.9,100\n"
        streams, report = parse_trades(data, date=DAY)
        s = streams[("A", DAY)]
        assert s.price.tolist() == [10.0, 10.1, 9.9]
        assert s.sequence.tolist() == [0, 1, 2]
        assert report.rejected_total == 0

    def test_groups_by_symbol_and_sorted(self):
        data = HEADER + b"09:30:00,B,1,1\n09:30:01,A,2,1\n09:30:02,B,3,1\n"
        streams, _ = parse_trades(data, date=DAY)
        assert list(streams) == [("A", DAY), ("B", DAY)]
        assert streams[("B", DAY)].price.tolist() == [1.0, 3.0]

    def test_date_from_file_name(self, tmp_path):
        p = tmp_path / "trades_20140506.csv"
        p.write_bytes(HEADER + b"09:30:00,A,1,1\n")
        streams, _ = parse_trades(p)
        assert list(streams) == [("A", "2014-05-06")]

    def test_missing_file_is_fatal(self, tmp_path):
        with pytest.raises(IngestError):
            parse_trades(tmp_path / "nope.csv")

    def test_missing_column_is_fatal(self):
        with pytest.raises(IngestError):
            parse_trades(b"timestamp,symbol,price\n09:30:00,A,1\n", date=DAY)

    def test_file_object_source(self):
        streams, _ = parse_trades(io.BytesIO(HEADER + b"09:30:00,A,1,1\n"), date=DAY)
        assert len(streams[("A", DAY)]) == 1


class TestParseQuotes:
    def test_normal_quote_not_flagged(self):
        streams, report = parse_quotes(QHEADER + b"09:30:00,A,99.90,100,100.00,200\n", date=DAY)
        q = streams[("A", DAY)][0]
        assert (q.bid, q.ask, q.bid_size, q.ask_size) == (99.9, 100.0, 100, 200)
        assert q.flags == 0 and report.crossed == 0

    def test_crossed_quote_flagged_and_kept(self):
        streams, report = parse_quotes(QHEADER + b"09:30:00,A,100.10,100,100.00,200\n", date=DAY)
        q = streams[("A", DAY)][0]
        assert q.crossed and report.crossed == 1 and report.accepted == 1

    def test_crossed_count_against_oracle(self):
        rng = np.random.default_rng(11)
        t = hms(10, 0, 0) + np.cumsum(rng.integers(1, 10**7, 500))
        crossed_at = set(rng.choice(500, 5, replace=False).tolist())
        lines = []
        for i, x in enumerate(t):
            mid = 50 + rng.integers(-100, 100) / 100
            bid, ask = (mid + 0.02, mid) if i in crossed_at else (mid - 0.01, mid + 0.01)
            lines.append(f"{format_timestamp(int(x))},Q,{bid:.2f},100,{ask:.2f},100")
        _, report = parse_quotes(QHEADER + "\n".join(lines).encode(), date=DAY)
        assert report.crossed == count_crossed(lines) == 5

    def test_zero_bid_flagged_one_sided(self):
        streams, report = parse_quotes(QHEADER + b"09:30:00,A,0,0,100.00,200\n", date=DAY)
        assert streams[("A", DAY)][0].one_sided
        assert report.flagged["one_sided"] == 1

    def test_negative_values_rejected(self):
        data = QHEADER + b"09:30:00,A,-1,100,100.00,200\n09:30:01,A,99,-100,100.00,200\n"
        streams, report = parse_quotes(data, date=DAY)
        assert streams == {} and report.rejected["negative_value"] == 2

    def test_usable_mask(self):
        q = QuoteStream.from_arrays([1, 2, 3], [99.0, 101.0, 0.0], [100.0, 100.0, 100.0])
        assert q.usable.tolist() == [True, False, False]


class TestSessions:
    @pytest.mark.parametrize("ts, session", [
        (hms(4, 0, 0), TradingSession.PRE_MARKET),
        (hms(9, 29, 59, 999_999_999), TradingSession.PRE_MARKET),
        (hms(9, 30, 0), TradingSession.MAIN),
        (hms(15, 59, 59, 999_999_999), TradingSession.MAIN),
        (hms(16, 0, 0), TradingSession.AFTER_MARKET),
        (hms(19, 59, 59, 999_999_999), TradingSession.AFTER_MARKET),
    ])
    def test_boundaries(self, ts, session):
        assert session_of(ts) is session

    @pytest.mark.parametrize("ts", [hms(3, 59, 59, 999_999_999), hms(20, 0, 0), -1])
    def test_out_of_session(self, ts):
        with pytest.raises(OutOfSessionError):
            session_of(ts)

    def test_partition(self):
        bounds = sorted(s.bounds for s in TradingSession)
        assert bounds[0][0] == hms(4, 0, 0) and bounds[-1][1] == hms(20, 0, 0)
        assert all(a[1] == b[0] for a, b in zip(bounds, bounds[1:]))


class TestTimestamps:
    @pytest.mark.parametrize("text, ns", [
        ("09:30:00", hms(9, 30, 0)),
        ("09:30:00.1", hms(9, 30, 0, 100_000_000)),
        ("09:30:00.000000001", hms(9, 30, 0, 1)),
        ("23:59:59.999999999", hms(23, 59, 59, 999_999_999)),
    ])
    def test_parse(self, text, ns):
        assert parse_timestamp(text) == ns == ts_ns(text)

    @given(st.integers(0, 24 * 3600 * 10**9 - 1))
    def test_format_round_trip(self, ns):
        assert parse_timestamp(format_timestamp(ns)) == ns


symbols = st.sampled_from(["A", "MSFT", "BRK.B", "AAL"])
prices = st.floats(min_value=1e-4, max_value=1e6, allow_nan=False, allow_infinity=False)
times = st.integers(hms(4, 0, 0), hms(20, 0, 0) - 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(times, symbols, prices, st.integers(1, 10**9)), min_size=1, max_size=40))
def test_trade_round_trip(rows):
    rows = sorted(rows, key=lambda r: r[0])
    recs = [TradeRecord(*r) for r in rows]
    text = HEADER.decode() + "".join(format_trade(r) + "\n" for r in recs)
    streams, report = parse_trades(text.encode(), date=DAY)
    assert report.accepted == len(recs)
    back = sorted(((r.timestamp, r.symbol, r.price, r.volume, r.sequence) for s in streams.values() for r in s),
                  key=lambda x: x[4])
    assert [(r.timestamp, r.symbol, r.price, r.volume) for r in recs] == [b[:4] for b in back]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(times, symbols, prices, st.integers(0, 10**6), prices, st.integers(0, 10**6)),
                min_size=1, max_size=30))
def test_quote_round_trip(rows):
    rows = sorted(rows, key=lambda r: r[0])
    recs = [QuoteRecord(t, s, b, a, bs, asz) for t, s, b, bs, a, asz in rows]
    text = QHEADER.decode() + "".join(format_quote(r) + "\n" for r in recs)
    streams, report = parse_quotes(text.encode(), date=DAY)
    assert report.accepted == len(recs)
    back = sorted((r for s in streams.values() for r in s), key=lambda r: r.sequence)
    assert [(r.timestamp, r.symbol, r.bid, r.ask, r.bid_size, r.ask_size) for r in recs] == \
        [(r.timestamp, r.symbol, r.bid, r.ask, r.bid_size, r.ask_size) for r in back]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(times, symbols, st.one_of(prices, st.just(-1.0), st.just(0.0)), st.integers(-5, 500)),
                max_size=60))
def test_ordering_and_conservation(rows):
    text = HEADER.decode() + "".join(f"{format_timestamp(t)},{s},{p!r},{v}\n" for t, s, p, v in rows)
    streams, report = parse_trades(text.encode(), date=DAY)
    assert report.accepted + report.rejected_total == report.total == len(rows)
    for s in streams.values():
        key = list(zip(s.timestamp.tolist(), s.sequence.tolist()))
        assert all(a < b for a, b in zip(key, key[1:]))


class TestFormatDescriptor:
    def test_taq_style_layout(self):
        fmt = FormatDescriptor.loads(
            "delimiter = pipe\n"
            "timestamp_format = compact\n"
            "resolution = ms\n"
            "col.timestamp = Time\ncol.symbol = Symbol\ncol.price = Trade_Price\ncol.volume = Trade_Volume\n"
        )
        data = b"Time|Exchange|Symbol|Trade_Volume|Trade_Price\n093000123|N|AAL|300|36.41\n093000123|P|AAL|100|36.40\n"
        streams, report = parse_trades(data, fmt, date="2014-05-06")
        s = streams[("AAL", "2014-05-06")]
        assert s.timestamp.tolist() == [hms(9, 30, 0, 123_000_000)] * 2
        assert s.price.tolist() == [36.41, 36.40]
        assert report.resolutions == frozenset({"ms"})

    def test_headerless_with_date_column(self):
        fmt = FormatDescriptor.loads("header = false\ncolumns = date,timestamp,symbol,price,volume\n")
        data = b"20210105,09:30:00,A,1.5,10\n2021-01-06,09:30:00,A,1.6,10\n"
        streams, _ = parse_trades(data, fmt)
        assert list(streams) == [("A", "2021-01-05"), ("A", "2021-01-06")]

    def test_integer_timestamps(self):
        fmt = FormatDescriptor.loads("timestamp_format = int\nresolution = us\n")
        streams, _ = parse_trades(HEADER + b"34200000001,A,1,1\n", fmt, date=DAY)
        assert streams[("A", DAY)].timestamp.tolist() == [hms(9, 30, 0, 1000)]

    def test_dumps_loads_round_trip(self):
        fmt = FormatDescriptor(delimiter="\t", header=False, columns=("timestamp", "symbol", "price", "volume"),
                               fields={"price": "px"}, resolution="ms", date="2014-01-02")
        assert FormatDescriptor.loads(fmt.dumps()) == fmt

    @pytest.mark.parametrize("text", ["timestamp_format = iso\n", "resolution = min\n", "bogus = 1\n",
                                      "header = false\n"])
    def test_invalid(self, text):
        with pytest.raises(IngestError):
            FormatDescriptor.loads(text)


class TestValidationReport:
    def test_merge_commutative_and_associative(self):
        def rep(total, acc, rej, sym):
            _, r = parse_trades(HEADER + "".join(
                [f"09:30:0{i},{sym},1,1\n" for i in range(acc)] + ["bad\n"] * rej).encode(), date=DAY)
            assert r.total == total
            return r

        a, b, c = rep(3, 2, 1, "A"), rep(4, 4, 0, "B"), rep(2, 0, 2, "A")
        ab_c = a.merge(b).merge(c)
        c_ba = c.merge(b.merge(a))
        assert ab_c.to_dict() == c_ba.to_dict()
        assert ab_c.total == 9 and ab_c.accepted == 6 and ab_c.rejected == Counter(malformed=3)

    def test_text_and_json(self):
        _, r = parse_trades(HEADER + b"09:30:00,A,1,1\n09:30:01,A,-1,1\n", date=DAY)
        assert "non_positive_price" in r.to_text()
        assert '"accepted": 1' in r.to_json()

    def test_kind_mismatch(self):
        with pytest.raises(ValueError):
            ValidationReport("trades").merge(ValidationReport("quotes"))


def test_writers_round_trip(tmp_path):
    a = TradeStream.from_arrays([hms(9, 30, 0), hms(9, 30, 1)], [10.0, 10.1], [100, 200], symbol="A", date=DAY)
    b = TradeStream.from_arrays([hms(9, 30, 0, 5)], [20.0], [300], symbol="B", date=DAY)
    write_trades([a, b], tmp_path / f"{DAY}.csv")
    streams, report = parse_trades(tmp_path / f"{DAY}.csv")
    assert report.accepted == 3
    assert streams[("A", DAY)].price.tolist() == [10.0, 10.1]
    assert streams[("B", DAY)].volume.tolist() == [300]
    assert (tmp_path / f"{DAY}.csv").read_text().splitlines()[0] == ",".join(CANONICAL.columns or
                                                                                ("timestamp", "symbol", "price", "volume"))

    q = QuoteStream.from_arrays([hms(9, 30, 0)], [9.99], [10.01], [1], [2], symbol="A", date=DAY)
    write_quotes([q], tmp_path / "q.csv")
    qs, _ = parse_quotes(tmp_path / "q.csv", date=DAY)
    assert qs[("A", DAY)][0].ask == 10.01
