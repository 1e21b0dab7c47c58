"""Trade and quote tape ingestion.

Canonical files are delimited text with a header line.  Timestamps are
time-of-day strings ``HH:MM:SS[.fffffffff]`` and are normalised to integer
nanoseconds since midnight.  Parsing is columnar (pyarrow + numpy), so a
ten-million line tape loads in seconds; every rejected line is counted by
reason in a :class:`ValidationReport`.
"""

from __future__ import annotations

import configparser
import datetime as dt
import enum
import io
import json
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv as pcsv

NS_PER_SECOND = 1_000_000_000
NS_PER_MINUTE = 60 * NS_PER_SECOND
NS_PER_HOUR = 60 * NS_PER_MINUTE

PRE_MARKET_OPEN = 4 * NS_PER_HOUR
MAIN_OPEN = 9 * NS_PER_HOUR + 30 * NS_PER_MINUTE
MAIN_CLOSE = 16 * NS_PER_HOUR
AFTER_MARKET_CLOSE = 20 * NS_PER_HOUR

TRADE_COLUMNS = ("timestamp", "symbol", "price", "volume")
QUOTE_COLUMNS = ("timestamp", "symbol", "bid", "bid_size", "ask", "ask_size")

# quote flag bits
CROSSED = 1
ONE_SIDED = 2

_RESOLUTION_NS = {"s": NS_PER_SECOND, "ms": 1_000_000, "us": 1_000, "ns": 1}
_RESOLUTION_DIGITS = {"s": 0, "ms": 3, "us": 6, "ns": 9}
_DATE_IN_NAME = re.compile(r"(\d{4})-?(\d{2})-?(\d{2})")
_FLOAT_RE = r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$"
_INT_RE = r"^-?\d+$"
_DELIMITER_NAMES = {"comma": ",", "pipe": "|", "tab": "\t", "semicolon": ";", "space": " "}


class IngestError(Exception):
    """Fatal ingestion failure (unreadable source, bad format descriptor)."""


class OutOfSessionError(ValueError):
    """Timestamp lies outside 04:00-20:00 exchange time."""


class TradingSession(enum.Enum):
    PRE_MARKET = "PreMarket"
    MAIN = "Main"
    AFTER_MARKET = "AfterMarket"

    @property
    def bounds(self) -> tuple[int, int]:
        return _SESSION_BOUNDS[self]


_SESSION_BOUNDS = {
    TradingSession.PRE_MARKET: (PRE_MARKET_OPEN, MAIN_OPEN),
    TradingSession.MAIN: (MAIN_OPEN, MAIN_CLOSE),
    TradingSession.AFTER_MARKET: (MAIN_CLOSE, AFTER_MARKET_CLOSE),
}


def session_of(timestamp: int) -> TradingSession:
    """Session containing ``timestamp`` (ns since midnight).

    Boundary instants belong to the later session, so 09:30:00 is Main and
    16:00:00 is AfterMarket.
    """
    if timestamp < PRE_MARKET_OPEN or timestamp >= AFTER_MARKET_CLOSE:
        raise OutOfSessionError(f"{format_timestamp(timestamp)} is outside 04:00-20:00")
    if timestamp < MAIN_OPEN:
        return TradingSession.PRE_MARKET
    if timestamp < MAIN_CLOSE:
        return TradingSession.MAIN
    return TradingSession.AFTER_MARKET


def format_timestamp(ns: int) -> str:
    ns = int(ns)
    sign = "-" if ns < 0 else ""
    ns = abs(ns)
    secs, frac = divmod(ns, NS_PER_SECOND)
    h, rem = divmod(secs, 3600)
    m, s = divmod(rem, 60)
    return f"{sign}{h:02d}:{m:02d}:{s:02d}.{frac:09d}"


def parse_timestamp(text: str) -> int:
    """Scalar version of the canonical timestamp parser."""
    ns, ok = _parse_hms(pa.array([text]))
    if not ok[0]:
        raise ValueError(f"bad timestamp {text!r}")
    return int(ns[0])


# ---------------------------------------------------------------------------
# Records and streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TradeRecord:
    timestamp: int
    symbol: str
    price: float
    volume: int
    sequence: int = 0


@dataclass(frozen=True)
class QuoteRecord:
    timestamp: int
    symbol: str
    bid: float
    ask: float
    bid_size: int = 0
    ask_size: int = 0
    sequence: int = 0
    flags: int = 0

    @property
    def crossed(self) -> bool:
        return bool(self.flags & CROSSED)

    @property
    def one_sided(self) -> bool:
        return bool(self.flags & ONE_SIDED)


def quote_flags(bid, ask):
    """Flag bits for bid/ask arrays (or scalars)."""
    bid = np.asarray(bid, dtype=np.float64)
    ask = np.asarray(ask, dtype=np.float64)
    flags = np.where(bid > ask, CROSSED, 0) | np.where((bid <= 0) | (ask <= 0), ONE_SIDED, 0)
    return flags.astype(np.uint8)


@dataclass(eq=False)
class TradeStream:
    """Time-ordered trades of one symbol on one day, stored column-wise."""

    symbol: str
    date: str
    timestamp: np.ndarray
    price: np.ndarray
    volume: np.ndarray
    sequence: np.ndarray

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.price = np.asarray(self.price, dtype=np.float64)
        self.volume = np.asarray(self.volume, dtype=np.int64)
        self.sequence = np.asarray(self.sequence, dtype=np.int64)

    @classmethod
    def from_arrays(cls, timestamp, price, volume=None, *, symbol="SYM", date="", sequence=None):
        n = len(price)
        if volume is None:
            volume = np.full(n, 100, dtype=np.int64)
        if sequence is None:
            sequence = np.arange(n, dtype=np.int64)
        return cls(symbol, date, timestamp, price, volume, sequence)

    @classmethod
    def from_records(cls, records, *, date=""):
        records = list(records)
        symbol = records[0].symbol if records else "SYM"
        return cls(
            symbol,
            date,
            [r.timestamp for r in records],
            [r.price for r in records],
            [r.volume for r in records],
            [r.sequence for r in records],
        )

    def __len__(self) -> int:
        return len(self.timestamp)

    def __getitem__(self, i: int) -> TradeRecord:
        return TradeRecord(
            int(self.timestamp[i]), self.symbol, float(self.price[i]),
            int(self.volume[i]), int(self.sequence[i]),
        )

    def __iter__(self) -> Iterator[TradeRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def key(self) -> tuple[str, str]:
        return (self.symbol, self.date)


@dataclass(eq=False)
class QuoteStream:
    """Time-ordered best bid/ask updates of one symbol on one day."""

    symbol: str
    date: str
    timestamp: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    bid_size: np.ndarray
    ask_size: np.ndarray
    sequence: np.ndarray
    flags: np.ndarray = None

    def __post_init__(self):
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        self.bid = np.asarray(self.bid, dtype=np.float64)
        self.ask = np.asarray(self.ask, dtype=np.float64)
        self.bid_size = np.asarray(self.bid_size, dtype=np.int64)
        self.ask_size = np.asarray(self.ask_size, dtype=np.int64)
        self.sequence = np.asarray(self.sequence, dtype=np.int64)
        if self.flags is None:
            self.flags = quote_flags(self.bid, self.ask)
        self.flags = np.asarray(self.flags, dtype=np.uint8)

    @classmethod
    def from_arrays(cls, timestamp, bid, ask, bid_size=None, ask_size=None, *,
                    symbol="SYM", date="", sequence=None):
        n = len(bid)
        if bid_size is None:
            bid_size = np.full(n, 100, dtype=np.int64)
        if ask_size is None:
            ask_size = np.full(n, 100, dtype=np.int64)
        if sequence is None:
            sequence = np.arange(n, dtype=np.int64)
        return cls(symbol, date, timestamp, bid, ask, bid_size, ask_size, sequence)

    def __len__(self) -> int:
        return len(self.timestamp)

    def __getitem__(self, i: int) -> QuoteRecord:
        return QuoteRecord(
            int(self.timestamp[i]), self.symbol, float(self.bid[i]), float(self.ask[i]),
            int(self.bid_size[i]), int(self.ask_size[i]), int(self.sequence[i]),
            int(self.flags[i]),
        )

    def __iter__(self) -> Iterator[QuoteRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def key(self) -> tuple[str, str]:
        return (self.symbol, self.date)

    @property
    def usable(self) -> np.ndarray:
        """Mask of quotes usable for spread analytics (neither crossed nor one-sided)."""
        return self.flags == 0


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------


@dataclass
class SymbolCoverage:
    records: int = 0
    days: tuple[str, ...] = ()
    first_timestamp: int | None = None
    last_timestamp: int | None = None

    def merge(self, other: SymbolCoverage) -> SymbolCoverage:
        firsts = [t for t in (self.first_timestamp, other.first_timestamp) if t is not None]
        lasts = [t for t in (self.last_timestamp, other.last_timestamp) if t is not None]
        return SymbolCoverage(
            self.records + other.records,
            tuple(sorted(set(self.days) | set(other.days))),
            min(firsts) if firsts else None,
            max(lasts) if lasts else None,
        )


@dataclass
class ValidationReport:
    """Counts of parsed, accepted, rejected and flagged records.

    ``accepted + sum(rejected.values()) == total`` always holds.  Reports
    merge commutatively, so partial reports from parallel workers can be
    combined in any order.
    """

    kind: str
    total: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    flagged: Counter = field(default_factory=Counter)
    coverage: dict[str, SymbolCoverage] = field(default_factory=dict)
    resolutions: frozenset = frozenset()

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())

    @property
    def crossed(self) -> int:
        return self.flagged.get("crossed", 0)

    def merge(self, other: ValidationReport) -> ValidationReport:
        if other.kind != self.kind:
            raise ValueError(f"cannot merge {self.kind} and {other.kind} reports")
        coverage = dict(self.coverage)
        for sym, cov in other.coverage.items():
            coverage[sym] = coverage[sym].merge(cov) if sym in coverage else cov
        return ValidationReport(
            self.kind,
            self.total + other.total,
            self.accepted + other.accepted,
            self.rejected + other.rejected,
            self.flagged + other.flagged,
            coverage,
            self.resolutions | other.resolutions,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "total": self.total,
            "accepted": self.accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "rejected_total": self.rejected_total,
            "flagged": dict(sorted(self.flagged.items())),
            "resolutions": sorted(self.resolutions),
            "coverage": {
                sym: {
                    "records": cov.records,
                    "days": list(cov.days),
                    "first_timestamp": None if cov.first_timestamp is None else format_timestamp(cov.first_timestamp),
                    "last_timestamp": None if cov.last_timestamp is None else format_timestamp(cov.last_timestamp),
                }
                for sym, cov in sorted(self.coverage.items())
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"{self.kind} validation report",
            f"  total parsed : {self.total}",
            f"  accepted     : {self.accepted}",
            f"  rejected     : {self.rejected_total}",
        ]
        for reason, n in sorted(self.rejected.items()):
            lines.append(f"    {reason:<20s} {n}")
        if self.flagged:
            lines.append("  flagged (retained):")
            for flag, n in sorted(self.flagged.items()):
                lines.append(f"    {flag:<20s} {n}")
        if self.resolutions:
            lines.append(f"  resolution   : {', '.join(sorted(self.resolutions))}")
        lines.append(f"  symbols      : {len(self.coverage)}")
        for sym, cov in sorted(self.coverage.items()):
            lines.append(f"    {sym:<8s} {cov.records:>10d} records over {len(cov.days)} day(s)")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Format descriptor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FormatDescriptor:
    """Maps a delimited file layout onto the canonical record fields.

    ``fields`` maps canonical names (``timestamp``, ``symbol``, ``price`` ...)
    to column names in the file; unmapped canonical names are looked up
    verbatim.  ``timestamp_format`` is one of

    * ``hms``     -- ``HH:MM:SS[.f...]`` with 1-9 fractional digits
    * ``compact`` -- ``HHMMSS`` followed by fractional digits (Daily TAQ style)
    * ``int``     -- integer count of ``resolution`` units since midnight

    ``resolution`` records the true clock granularity of the source; values
    are always stored in nanoseconds.  A per-row trading date is read only
    when the descriptor maps ``col.date`` or lists ``date`` in ``columns``.
    """

    delimiter: str = ","
    header: bool = True
    columns: tuple[str, ...] | None = None
    fields: Mapping[str, str] = field(default_factory=dict)
    timestamp_format: str = "hms"
    resolution: str = "ns"
    date: str | None = None

    def __post_init__(self):
        if self.timestamp_format not in ("hms", "compact", "int"):
            raise IngestError(f"unknown timestamp_format {self.timestamp_format!r}")
        if self.resolution not in _RESOLUTION_NS:
            raise IngestError(f"unknown resolution {self.resolution!r}")
        if not self.header and not self.columns:
            raise IngestError("headerless formats must list their columns")
        if len(self.delimiter) != 1:
            raise IngestError(f"delimiter must be one character, got {self.delimiter!r}")

    def column(self, name: str) -> str:
        return self.fields.get(name, name)

    @classmethod
    def loads(cls, text: str) -> FormatDescriptor:
        """Parse the ``key = value`` descriptor format.

        Recognised keys: ``delimiter`` (a character or comma/pipe/tab/...),
        ``header``, ``columns`` (comma separated), ``timestamp_format``,
        ``resolution``, ``date`` and ``col.<canonical> = <file column>``.
        """
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        parser.optionxform = str
        try:
            parser.read_string("[format]\n" + text)
        except configparser.Error as exc:
            raise IngestError(f"bad format descriptor: {exc}") from exc
        sec = parser["format"]
        kwargs: dict = {}
        fields = {}
        for key, value in sec.items():
            value = value.strip()
            if key.startswith("col."):
                fields[key[4:]] = value
            elif key == "delimiter":
                kwargs["delimiter"] = _DELIMITER_NAMES.get(value.lower(), value)
            elif key == "header":
                kwargs["header"] = sec.getboolean("header")
            elif key == "columns":
                kwargs["columns"] = tuple(c.strip() for c in value.split(","))
            elif key in ("timestamp_format", "resolution", "date"):
                kwargs[key] = value
            else:
                raise IngestError(f"unknown format key {key!r}")
        return cls(fields=fields, **kwargs)

    @classmethod
    def load(cls, path) -> FormatDescriptor:
        try:
            return cls.loads(Path(path).read_text())
        except OSError as exc:
            raise IngestError(f"cannot read format descriptor {path}: {exc}") from exc

    def dumps(self) -> str:
        inv = {v: k for k, v in _DELIMITER_NAMES.items()}
        lines = [
            f"delimiter = {inv.get(self.delimiter, self.delimiter)}",
            f"header = {'true' if self.header else 'false'}",
            f"timestamp_format = {self.timestamp_format}",
            f"resolution = {self.resolution}",
        ]
        if self.columns:
            lines.append("columns = " + ",".join(self.columns))
        if self.date:
            lines.append(f"date = {self.date}")
        for k, v in sorted(self.fields.items()):
            lines.append(f"col.{k} = {v}")
        return "\n".join(lines) + "\n"


CANONICAL = FormatDescriptor()


# ---------------------------------------------------------------------------
# Vectorised field parsers
# ---------------------------------------------------------------------------


def _string_buffers(arr: pa.Array):
    arr = arr.cast(pa.large_string()) if arr.type != pa.large_string() else arr
    if arr.null_count:
        arr = pc.fill_null(arr, "")
    bufs = arr.buffers()
    offsets = np.frombuffer(bufs[1], dtype=np.int64)[arr.offset: arr.offset + len(arr) + 1]
    data = np.frombuffer(bufs[2], dtype=np.uint8) if bufs[2] is not None else np.zeros(0, np.uint8)
    data = np.concatenate([data, np.zeros(24, np.uint8)])  # pad so gathers never overrun
    starts = offsets[:-1]
    lengths = np.diff(offsets)
    return data, starts, lengths


def _digits_at(data, starts, k):
    d = data[starts + k].astype(np.int64) - 48
    return d, (d >= 0) & (d <= 9)


def _fraction(data, starts, lengths, first, ok):
    """Nanoseconds from the fractional digits at ``first`` .. end of string."""
    frac = np.zeros(len(starts), dtype=np.int64)
    for k in range(9):
        present = lengths > first + k
        d, isdig = _digits_at(data, starts, first + k)
        ok &= isdig | ~present
        frac = frac * 10 + np.where(present & isdig, d, 0)
    return frac


def _parse_hms(arr: pa.Array):
    data, starts, lengths = _string_buffers(arr)
    ok = (lengths == 8) | ((lengths >= 10) & (lengths <= 18))
    vals = []
    for k in (0, 1, 3, 4, 6, 7):
        d, isdig = _digits_at(data, starts, k)
        ok &= isdig
        vals.append(d)
    ok &= (data[starts + 2] == ord(":")) & (data[starts + 5] == ord(":"))
    ok &= (lengths == 8) | (data[starts + 8] == ord("."))
    h = vals[0] * 10 + vals[1]
    m = vals[2] * 10 + vals[3]
    s = vals[4] * 10 + vals[5]
    ok &= (h < 24) & (m < 60) & (s < 60)
    frac = _fraction(data, starts, lengths, 9, ok)
    ns = ((h * 60 + m) * 60 + s) * NS_PER_SECOND + frac
    return np.where(ok, ns, 0), ok


def _parse_compact(arr: pa.Array):
    data, starts, lengths = _string_buffers(arr)
    ok = (lengths >= 6) & (lengths <= 15)
    vals = []
    for k in range(6):
        d, isdig = _digits_at(data, starts, k)
        ok &= isdig
        vals.append(d)
    h = vals[0] * 10 + vals[1]
    m = vals[2] * 10 + vals[3]
    s = vals[4] * 10 + vals[5]
    ok &= (h < 24) & (m < 60) & (s < 60)
    frac = _fraction(data, starts, lengths, 6, ok)
    ns = ((h * 60 + m) * 60 + s) * NS_PER_SECOND + frac
    return np.where(ok, ns, 0), ok


def _parse_int_time(arr: pa.Array, resolution: str):
    vals, ok = _parse_int(arr)
    ns = vals * _RESOLUTION_NS[resolution]
    ok &= (vals >= 0) & (ns < 24 * NS_PER_HOUR)
    return np.where(ok, ns, 0), ok


def _masked_cast(arr: pa.Array, typ, pattern: str):
    try:
        out = pc.cast(arr, typ)
        return out, np.ones(len(arr), dtype=bool)
    except (pa.ArrowInvalid, pa.ArrowNotImplementedError):
        pass
    ok = pc.match_substring_regex(pc.fill_null(arr, ""), pattern)
    ok_np = ok.to_numpy(zero_copy_only=False).astype(bool)
    cleaned = pc.if_else(ok, arr, pa.scalar("0"))
    try:
        return pc.cast(cleaned, typ), ok_np
    except (pa.ArrowInvalid, pa.ArrowNotImplementedError):
        # overflow and similar: settle element by element
        py = cleaned.to_pylist()
        conv = int if pa.types.is_integer(typ) else float
        vals = []
        for i, v in enumerate(py):
            try:
                x = conv(v)
                if pa.types.is_integer(typ) and not -(2**63) <= x < 2**63:
                    raise OverflowError
                vals.append(x)
            except (ValueError, OverflowError):
                ok_np[i] = False
                vals.append(0)
        return pa.array(vals, type=typ), ok_np


def _parse_float(arr: pa.Array):
    out, ok = _masked_cast(arr, pa.float64(), _FLOAT_RE)
    vals = out.to_numpy(zero_copy_only=False)
    ok &= np.isfinite(vals)
    return np.where(ok, vals, 0.0), ok


def _parse_int(arr: pa.Array):
    out, ok = _masked_cast(arr, pa.int64(), _INT_RE)
    vals = out.to_numpy(zero_copy_only=False).astype(np.int64)
    return np.where(ok, vals, 0), ok


def _normalise_date(text: str) -> str | None:
    m = _DATE_IN_NAME.fullmatch(text.strip())
    if not m:
        return None
    try:
        return dt.date(int(m[1]), int(m[2]), int(m[3])).isoformat()
    except ValueError:
        return None


def date_from_name(name: str) -> str | None:
    m = _DATE_IN_NAME.search(Path(str(name)).name)
    return _normalise_date(m[0]) if m else None


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _read_table(source, fmt: FormatDescriptor, needed: tuple[str, ...]):
    """Read ``source`` as all-string columns; returns (table, malformed-line count)."""
    bad_rows = []

    def on_invalid(row):
        bad_rows.append(row.number)
        return "skip"

    if fmt.columns:
        # explicit column names; a header line, if present, is skipped
        read_opts = pcsv.ReadOptions(use_threads=False, column_names=list(fmt.columns),
                                     skip_rows=1 if fmt.header else 0)
    else:
        read_opts = pcsv.ReadOptions(use_threads=False)
    # blank lines count as malformed rather than vanishing
    parse_opts = pcsv.ParseOptions(delimiter=fmt.delimiter, invalid_row_handler=on_invalid,
                                   ignore_empty_lines=False)
    wanted = [fmt.column(c) for c in needed]
    convert_opts = pcsv.ConvertOptions(
        column_types={c: pa.string() for c in wanted},
        include_columns=wanted,
        include_missing_columns=False,
        strings_can_be_null=False,
    )
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    elif isinstance(source, (str, os.PathLike)):
        if not Path(source).is_file():
            raise IngestError(f"cannot read {source}: no such file")
    try:
        table = pcsv.read_csv(source, read_options=read_opts, parse_options=parse_opts,
                              convert_options=convert_opts)
    except pa.ArrowInvalid as exc:
        msg = str(exc)
        if "Empty CSV file" in msg:
            return None, 0
        if "include_columns" in msg or "not found" in msg or "No such" in msg:
            raise IngestError(f"source lacks required columns {wanted}: {msg}") from exc
        raise IngestError(f"unreadable source: {msg}") from exc
    except pa.ArrowKeyError as exc:
        raise IngestError(f"source lacks required columns {wanted}: {exc}") from exc
    except OSError as exc:
        raise IngestError(f"cannot read source: {exc}") from exc
    return table, len(bad_rows)


def _resolve_date(source, fmt: FormatDescriptor, date: str | None) -> str:
    if date is not None:
        norm = _normalise_date(date)
        if norm is None:
            raise IngestError(f"bad date {date!r}")
        return norm
    if fmt.date:
        norm = _normalise_date(fmt.date)
        if norm is None:
            raise IngestError(f"bad date {fmt.date!r} in format descriptor")
        return norm
    if isinstance(source, (str, os.PathLike)):
        return date_from_name(str(source)) or ""
    return ""


def _parse_time_column(arr: pa.Array, fmt: FormatDescriptor):
    if fmt.timestamp_format == "hms":
        ns, ok = _parse_hms(arr)
    elif fmt.timestamp_format == "compact":
        ns, ok = _parse_compact(arr)
    else:
        ns, ok = _parse_int_time(arr, fmt.resolution)
    if fmt.resolution != "ns" and fmt.timestamp_format != "int":
        # data declared coarser than its digits: truncate to the true granularity
        unit = _RESOLUTION_NS[fmt.resolution]
        ns = ns - ns % unit
    return ns, ok


def _group_rows(sym_codes, date_codes, n_dates, keep):
    rows = np.flatnonzero(keep)
    key = sym_codes[rows] * n_dates + date_codes[rows]
    if len(rows) == 0:
        return []
    if key[0] == key[-1] and (key == key[0]).all():
        return [(int(key[0]), rows)]
    order = np.argsort(key, kind="stable")
    rows = rows[order]
    key = key[order]
    cuts = np.flatnonzero(np.diff(key)) + 1
    starts = np.concatenate([[0], cuts])
    return [(int(key[s]), chunk) for s, chunk in zip(starts, np.split(rows, cuts))]


def _parse_common(source, fmt, date, extra_needed):
    """Shared front half of trade/quote parsing.

    Returns a dict with the table, timestamps, validity mask, group codes and
    the count of rows the CSV reader itself rejected.
    """
    use_date_col = "date" in fmt.fields or "date" in (fmt.columns or ())
    needed = ("timestamp", "symbol") + extra_needed + (("date",) if use_date_col else ())
    table, n_bad_lines = _read_table(source, fmt, needed)
    default_date = _resolve_date(source, fmt, date)
    if table is None or table.num_rows == 0:
        return None, n_bad_lines, default_date
    cols = {c: table.column(fmt.column(c)).combine_chunks() for c in needed}
    ts, ok = _parse_time_column(cols["timestamp"], fmt)
    sym = cols["symbol"]
    ok &= pc.greater(pc.utf8_length(sym), 0).to_numpy(zero_copy_only=False).astype(bool)
    enc = pc.dictionary_encode(sym)
    sym_codes = enc.indices.to_numpy(zero_copy_only=False).astype(np.int64)
    sym_names = enc.dictionary.to_pylist()
    if use_date_col:
        raw_names, date_codes = np.unique(
            np.asarray(cols["date"].to_pylist(), dtype=object).astype(str), return_inverse=True)
        norm = [_normalise_date(d) for d in raw_names]
        ok &= np.array([d is not None for d in norm])[date_codes]
        date_names = [d or "" for d in norm]
        # several raw spellings may normalise to one date
        uniq = sorted(set(date_names))
        remap = np.array([uniq.index(d) for d in date_names], dtype=np.int64)
        date_codes = remap[date_codes]
        date_names = uniq
    else:
        date_codes = np.zeros(len(ts), dtype=np.int64)
        date_names = [default_date]
    ctx = {
        "cols": cols,
        "ts": ts,
        "ok": ok,
        "sym_codes": sym_codes,
        "sym_names": sym_names,
        "date_codes": date_codes,
        "date_names": date_names,
        "n": table.num_rows,
    }
    return ctx, n_bad_lines, default_date


def _out_of_order(ts: np.ndarray, groups) -> np.ndarray:
    """Mask of rows whose timestamp regresses below an earlier row of the same group."""
    bad = np.zeros(len(ts), dtype=bool)
    for _, rows in groups:
        t = ts[rows]
        if len(t) < 2:
            continue
        prior_max = np.maximum.accumulate(t)[:-1]
        regress = np.concatenate([[False], t[1:] < prior_max])
        bad[rows[regress]] = True
    return bad


def _coverage(report: ValidationReport, sym: str, date: str, ts: np.ndarray):
    cov = SymbolCoverage(len(ts), (date,), int(ts[0]), int(ts[-1]))
    prev = report.coverage.get(sym)
    report.coverage[sym] = prev.merge(cov) if prev else cov


def parse_trades(source, fmt: FormatDescriptor = CANONICAL, *, date: str | None = None):
    """Parse a trade file into per symbol-day :class:`TradeStream` objects.

    Parameters
    ----------
    source
        Path, bytes or binary file object.
    fmt
        Column layout; defaults to the canonical ``timestamp,symbol,price,volume``.
    date
        Trading date for files without a date column.  Falls back to the
        descriptor's ``date`` and then to a ``YYYY-MM-DD``/``YYYYMMDD`` token
        in the file name.

    Returns
    -------
    (streams, report)
        ``streams`` maps ``(symbol, date)`` to a stream sorted by
        ``(timestamp, sequence)``; ``report`` counts every parsed line.
    """
    ctx, n_bad_lines, default_date = _parse_common(source, fmt, date, ("price", "volume"))
    report = ValidationReport("trades", resolutions=frozenset([fmt.resolution]))
    report.total = n_bad_lines
    if n_bad_lines:
        report.rejected["malformed"] += n_bad_lines
    if ctx is None:
        return {}, report

    price, ok_p = _parse_float(ctx["cols"]["price"])
    volume, ok_v = _parse_int(ctx["cols"]["volume"])
    malformed = ~(ctx["ok"] & ok_p & ok_v)
    nonpos_price = ~malformed & (price <= 0)
    nonpos_vol = ~malformed & ~nonpos_price & (volume <= 0)
    candidate = ~(malformed | nonpos_price | nonpos_vol)
    groups = _group_rows(ctx["sym_codes"], ctx["date_codes"], len(ctx["date_names"]), candidate)
    ooo = _out_of_order(ctx["ts"], groups)

    n = ctx["n"]
    report.total += n
    for reason, mask in (("malformed", malformed), ("non_positive_price", nonpos_price),
                         ("non_positive_volume", nonpos_vol), ("out_of_order", ooo)):
        k = int(mask.sum())
        if k:
            report.rejected[reason] += k

    ts = ctx["ts"]
    n_dates = len(ctx["date_names"])
    streams = {}
    for key, rows in groups:
        rows = rows[~ooo[rows]]
        if len(rows) == 0:
            continue
        sym = ctx["sym_names"][key // n_dates]
        day = ctx["date_names"][key % n_dates]
        stream = TradeStream(sym, day, ts[rows], price[rows], volume[rows], rows.astype(np.int64))
        streams[(sym, day)] = stream
        _coverage(report, sym, day, stream.timestamp)
        report.accepted += len(rows)
    return dict(sorted(streams.items())), report


def parse_quotes(source, fmt: FormatDescriptor = CANONICAL, *, date: str | None = None):
    """Parse a quote file into per symbol-day :class:`QuoteStream` objects.

    Crossed (bid > ask) and one-sided (bid or ask equal to zero) quotes are
    kept but flagged; negative prices or sizes are rejected.
    """
    ctx, n_bad_lines, default_date = _parse_common(
        source, fmt, date, ("bid", "bid_size", "ask", "ask_size"))
    report = ValidationReport("quotes", resolutions=frozenset([fmt.resolution]))
    report.total = n_bad_lines
    if n_bad_lines:
        report.rejected["malformed"] += n_bad_lines
    if ctx is None:
        return {}, report

    cols = ctx["cols"]
    bid, ok_b = _parse_float(cols["bid"])
    ask, ok_a = _parse_float(cols["ask"])
    bsz, ok_bs = _parse_int(cols["bid_size"])
    asz, ok_as = _parse_int(cols["ask_size"])
    malformed = ~(ctx["ok"] & ok_b & ok_a & ok_bs & ok_as)
    negative = ~malformed & ((bid < 0) | (ask < 0) | (bsz < 0) | (asz < 0))
    candidate = ~(malformed | negative)
    groups = _group_rows(ctx["sym_codes"], ctx["date_codes"], len(ctx["date_names"]), candidate)
    ooo = _out_of_order(ctx["ts"], groups)

    report.total += ctx["n"]
    for reason, mask in (("malformed", malformed), ("negative_value", negative), ("out_of_order", ooo)):
        k = int(mask.sum())
        if k:
            report.rejected[reason] += k

    ts = ctx["ts"]
    n_dates = len(ctx["date_names"])
    streams = {}
    for key, rows in groups:
        rows = rows[~ooo[rows]]
        if len(rows) == 0:
            continue
        sym = ctx["sym_names"][key // n_dates]
        day = ctx["date_names"][key % n_dates]
        stream = QuoteStream(sym, day, ts[rows], bid[rows], ask[rows], bsz[rows], asz[rows],
                             rows.astype(np.int64))
        streams[(sym, day)] = stream
        _coverage(report, sym, day, stream.timestamp)
        report.accepted += len(rows)
        crossed = int((stream.flags & CROSSED).astype(bool).sum())
        one_sided = int((stream.flags & ONE_SIDED).astype(bool).sum())
        if crossed:
            report.flagged["crossed"] += crossed
        if one_sided:
            report.flagged["one_sided"] += one_sided
    return dict(sorted(streams.items())), report


# ---------------------------------------------------------------------------
# Serialisation back to the canonical format
# ---------------------------------------------------------------------------


def format_trade(rec: TradeRecord) -> str:
    return f"{format_timestamp(rec.timestamp)},{rec.symbol},{rec.price!r},{rec.volume}"


def format_quote(rec: QuoteRecord) -> str:
    return (f"{format_timestamp(rec.timestamp)},{rec.symbol},{rec.bid!r},{rec.bid_size},"
            f"{rec.ask!r},{rec.ask_size}")


def _merged_order(streams):
    """Global time order over several streams, ties broken by stream then position."""
    ts = np.concatenate([s.timestamp for s in streams])
    sid = np.concatenate([np.full(len(s), i, dtype=np.int64) for i, s in enumerate(streams)])
    pos = np.concatenate([np.arange(len(s), dtype=np.int64) for s in streams])
    return np.lexsort((pos, sid, ts)), sid


def write_trades(streams, path) -> None:
    """Write streams to one canonical trade file, merged into time order."""
    streams = [s for s in streams if len(s)]
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(b"timestamp,symbol,price,volume\n")
        if not streams:
            return
        order, sid = _merged_order(streams)
        sym = np.array([s.symbol for s in streams], dtype=object)[sid[order]]
        table = pa.table({
            "timestamp": pa.array(np.concatenate([s.timestamp for s in streams])[order], pa.time64("ns")),
            "symbol": pa.array(sym, pa.string()),
            "price": np.concatenate([s.price for s in streams])[order],
            "volume": np.concatenate([s.volume for s in streams])[order],
        })
        pcsv.write_csv(table, fh, pcsv.WriteOptions(include_header=False, quoting_style="none"))


def write_quotes(streams, path) -> None:
    streams = [s for s in streams if len(s)]
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(b"timestamp,symbol,bid,bid_size,ask,ask_size\n")
        if not streams:
            return
        order, sid = _merged_order(streams)
        sym = np.array([s.symbol for s in streams], dtype=object)[sid[order]]
        cat = lambda name: np.concatenate([getattr(s, name) for s in streams])[order]  # noqa: E731
        table = pa.table({
            "timestamp": pa.array(cat("timestamp"), pa.time64("ns")),
            "symbol": pa.array(sym, pa.string()),
            "bid": cat("bid"),
            "bid_size": cat("bid_size"),
            "ask": cat("ask"),
            "ask_size": cat("ask_size"),
        })
        pcsv.write_csv(table, fh, pcsv.WriteOptions(include_header=False, quoting_style="none"))
