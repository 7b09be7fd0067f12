"""CSV ingestion and export with fixed float formatting."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import warnings
from collections import defaultdict
from decimal import ROUND_HALF_EVEN, Context
from pathlib import Path

import numpy as np

from .backtest import ForwardVarianceStore
from .core import FORWARD_VARIANCE, VIX_LEVEL, DatedSeries
from .replication import OptionGrid

SIGNIFICANT_DIGITS = 12
VIX_HEADER = ("date", "close")
FVS_HEADER = ("date", "maturity_date", "forward_variance")
OPTIONS_HEADER = ("date", "maturity_date", "strike", "call_price", "put_price")
FVS_BOUNDS = (0.0, 4.0)

_CTX = Context(prec=SIGNIFICANT_DIGITS, rounding=ROUND_HALF_EVEN)


class IngestError(ValueError):
    """Malformed input file; ``line`` is the 1-based line number when known."""

    def __init__(self, path, message: str, line: int | None = None):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class IngestWarning(UserWarning):
    pass


def format_float(x: float) -> str:
    """12 significant digits, ties to even, on the shortest decimal form of ``x``."""
    x = float(x)
    if not np.isfinite(x):
        return repr(x)
    if x == 0:
        return "0"
    # decimal rounding first, so ties follow the decimal digits rather than the binary value
    d = _CTX.create_decimal(repr(x))
    return f"{float(d):.12g}"


def _to_plain(obj):
    if isinstance(obj, float):
        return float(format_float(obj)) if np.isfinite(obj) else str(obj)
    if isinstance(obj, (np.floating,)):
        return _to_plain(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, (dt.date, Path)):
        return str(obj)
    return obj


def dump_json(obj, path) -> None:
    """Sorted keys, floats rounded to 12 significant digits."""
    with open(path, "w", newline="\n") as fh:
        json.dump(_to_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _read_rows(path, header):
    path = Path(path)
    if not path.is_file():
        raise IngestError(path, "file not found")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise IngestError(path, "empty file") from None
        got = tuple(c.strip().lower() for c in got)
        if got != tuple(header):
            raise IngestError(path, f"expected header {','.join(header)}, got {','.join(got)}", 1)
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestError(path, f"expected {len(header)} fields, got {len(row)}", line_no)
            yield line_no, [c.strip() for c in row]


def _parse_date(path, line, field, text) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise IngestError(path, f"field {field!r}: not an ISO-8601 date: {text!r}", line) from None


def _parse_float(path, line, field, text) -> float:
    try:
        v = float(text)
    except ValueError:
        raise IngestError(path, f"field {field!r}: not a number: {text!r}", line) from None
    if not np.isfinite(v):
        raise IngestError(path, f"field {field!r}: non-finite value {text!r}", line)
    return v


def ingest_vix_csv(path) -> DatedSeries:
    """Read ``date,close`` rows into a VIX-level series.

    Duplicate dates and non-positive closes are rejected; rows out of date
    order are sorted with an :class:`IngestWarning`.
    """
    seen: dict = {}
    order = []
    for line, (d_txt, c_txt) in _read_rows(path, VIX_HEADER):
        d = _parse_date(path, line, "date", d_txt)
        c = _parse_float(path, line, "close", c_txt)
        if c <= 0:
            raise IngestError(path, f"field 'close': non-positive close {c_txt}", line)
        if d in seen:
            raise IngestError(path, f"duplicate date {d.isoformat()} (first on line {seen[d][0]})", line)
        seen[d] = (line, c)
        order.append(d)
    if not order:
        raise IngestError(path, "no data rows")
    if any(b < a for a, b in zip(order, order[1:])):
        warnings.warn(f"{path}: rows out of date order; sorted on ingest", IngestWarning, stacklevel=2)
    dates = sorted(seen)
    return DatedSeries(dates, [seen[d][1] for d in dates], VIX_LEVEL)


def ingest_fvs_csv(path) -> ForwardVarianceStore:
    """Read ``date,maturity_date,forward_variance`` rows into a store keyed by maturity.

    Values must be annualized decimal variances in ``(0, 4)``.
    """
    lo, hi = FVS_BOUNDS
    by_mat: dict = defaultdict(dict)
    for line, (d_txt, m_txt, v_txt) in _read_rows(path, FVS_HEADER):
        d = _parse_date(path, line, "date", d_txt)
        m = _parse_date(path, line, "maturity_date", m_txt)
        v = _parse_float(path, line, "forward_variance", v_txt)
        if not lo < v < hi:
            raise IngestError(path, f"field 'forward_variance': {v_txt} outside ({lo:g}, {hi:g}); "
                                    "expected annualized decimal variance", line)
        if m < d:
            raise IngestError(path, f"maturity {m.isoformat()} before date {d.isoformat()}", line)
        if d in by_mat[m]:
            raise IngestError(path, f"duplicate key ({d.isoformat()}, {m.isoformat()})", line)
        by_mat[m][d] = v
    if not by_mat:
        raise IngestError(path, "no data rows")
    store = ForwardVarianceStore()
    for m, rows in by_mat.items():
        dates = sorted(rows)
        store.add(m, DatedSeries(dates, [rows[d] for d in dates], FORWARD_VARIANCE))
    return store


def export_vix_csv(series: DatedSeries, path) -> None:
    write_csv(path, VIX_HEADER, ((d.isoformat(), float(v)) for d, v in zip(series.dates, series.values)))


def export_fvs_csv(store: ForwardVarianceStore, path) -> None:
    write_csv(path, FVS_HEADER, ((d.isoformat(), m.isoformat(), v) for d, m, v in store.rows()))


def implied_forward(strikes, calls, puts) -> float:
    """Forward from put-call parity at zero rates, median over strikes."""
    return float(np.median(np.asarray(calls) - np.asarray(puts) + np.asarray(strikes)))


def ingest_options_csv(path) -> list[OptionGrid]:
    """Read ``date,maturity_date,strike,call_price,put_price`` into one grid per (date, maturity).

    The spot of each grid is the put-call-parity forward.
    """
    groups: dict = defaultdict(list)
    for line, (d_txt, m_txt, k_txt, c_txt, p_txt) in _read_rows(path, OPTIONS_HEADER):
        d = _parse_date(path, line, "date", d_txt)
        m = _parse_date(path, line, "maturity_date", m_txt)
        k = _parse_float(path, line, "strike", k_txt)
        c = _parse_float(path, line, "call_price", c_txt)
        p = _parse_float(path, line, "put_price", p_txt)
        if k <= 0:
            raise IngestError(path, f"field 'strike': non-positive strike {k_txt}", line)
        if c < 0 or p < 0:
            raise IngestError(path, "negative option price", line)
        groups[(d, m)].append((k, c, p, line))
    if not groups:
        raise IngestError(path, "no data rows")
    grids = []
    for (d, m), rows in sorted(groups.items()):
        rows.sort()
        for a, b in zip(rows, rows[1:]):
            if a[0] == b[0]:
                raise IngestError(path, f"duplicate strike {b[0]:g} for ({d.isoformat()}, {m.isoformat()})", b[3])
        k, c, p = (np.array([r[i] for r in rows]) for i in range(3))
        try:
            grids.append(OptionGrid(d, m, k, c, p, implied_forward(k, c, p)))
        except ValueError as exc:
            raise IngestError(path, f"({d.isoformat()}, {m.isoformat()}): {exc}") from None
    return grids
