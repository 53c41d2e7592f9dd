"""Daily OHLCV ingestion and bar validation.

CSV layout: ``Date,Open,High,Low,Close,Volume[,Adj Close]``, dates in
``DD-MM-YYYY`` unless another ``strptime`` format is given.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import date, datetime
from functools import cached_property
from typing import IO, Iterable

import numpy as np

from .errors import DuplicateDateError, ParseError

DEFAULT_DATE_FORMAT = "%d-%m-%Y"
REQUIRED_COLUMNS = ("Date", "Open", "High", "Low", "Close", "Volume")
ADJ_CLOSE = "Adj Close"
VALID = "VALID"


@dataclass(frozen=True)
class OhlcvBar:
    date: date
    open: float
    high: float
    low: float
    close: float
    volume: int
    adj_close: float | None = None


def check_bar(bar: OhlcvBar) -> str:
    """Return ``VALID`` or the name of the first rule the bar breaks."""
    prices = (bar.open, bar.high, bar.low, bar.close)
    if any(not math.isfinite(p) or p <= 0 for p in prices):
        return "nonpositive price"
    if bar.adj_close is not None and not (math.isfinite(bar.adj_close) and bar.adj_close > 0):
        return "nonpositive adj close"
    if bar.volume < 0:
        return "negative volume"
    if bar.open < bar.low:
        return "open < low"
    if bar.open > bar.high:
        return "open > high"
    if bar.close < bar.low:
        return "close < low"
    if bar.close > bar.high:
        return "close > high"
    return VALID


@dataclass(frozen=True)
class ValidationReport:
    total_rows: int
    valid: int
    flagged: tuple[tuple[int, str], ...]

    def to_jsonl(self, dates: Iterable[date] | None = None) -> str:
        dates = list(dates) if dates is not None else None
        lines = []
        for row, rule in self.flagged:
            rec = {"row": row, "rule": rule}
            if dates is not None:
                rec["date"] = dates[row].isoformat()
            lines.append(json.dumps(rec, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def summary(self) -> dict:
        return {"total_rows": self.total_rows, "valid": self.valid, "flagged": len(self.flagged)}


@dataclass(frozen=True)
class PriceSeries:
    """Immutable, date-ordered bar list. ``flags`` is derived on first access."""

    symbol: str
    bars: tuple[OhlcvBar, ...]

    def __post_init__(self):
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date == prev.date:
                raise DuplicateDateError(f"duplicate date {cur.date.isoformat()}")
            if cur.date < prev.date:
                raise ParseError("bars must be in increasing date order")

    def __len__(self) -> int:
        return len(self.bars)

    @cached_property
    def flags(self) -> tuple[str, ...]:
        return tuple(check_bar(b) for b in self.bars)

    @property
    def valid_mask(self) -> np.ndarray:
        return np.array([f == VALID for f in self.flags], dtype=bool)

    @property
    def dates(self) -> list[date]:
        return [b.date for b in self.bars]

    def column(self, name: str) -> np.ndarray:
        if name == "volume":
            return np.array([b.volume for b in self.bars], dtype=np.int64)
        return np.array([getattr(b, name) for b in self.bars], dtype=np.float64)

    @property
    def closes(self) -> np.ndarray:
        return self.column("close")

    def subset(self, mask: np.ndarray) -> "PriceSeries":
        return PriceSeries(self.symbol, tuple(b for b, keep in zip(self.bars, mask) if keep))


def _parse_float(text: str, line: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {line}: non-numeric {col} {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"row {line}: non-finite {col} {text!r}")
    return value


def _parse_volume(text: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    value = _parse_float(text, line, "Volume")
    if value != int(value):
        raise ParseError(f"row {line}: fractional Volume {text!r}")
    return int(value)


def parse_ohlcv_csv(source: IO[bytes] | IO[str] | bytes | str,
                    date_format: str = DEFAULT_DATE_FORMAT,
                    symbol: str = "") -> PriceSeries:
    """Parse a CSV stream into a date-sorted :class:`PriceSeries`.

    Row numbers in error messages are 1-based file lines (the header is line 1).
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    text = text.lstrip("﻿")

    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty input: header row missing") from None
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"header missing columns: {', '.join(missing)}")
    pos = {name: header.index(name) for name in REQUIRED_COLUMNS}
    adj_pos = header.index(ADJ_CLOSE) if ADJ_CLOSE in header else None

    bars: list[OhlcvBar] = []
    seen: dict[date, int] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"row {line}: expected {len(header)} fields, got {len(row)}")
        cells = [c.strip() for c in row]
        try:
            day = datetime.strptime(cells[pos["Date"]], date_format).date()
        except ValueError:
            raise ParseError(f"row {line}: unparseable date {cells[pos['Date']]!r}") from None
        if day in seen:
            raise DuplicateDateError(
                f"row {line}: duplicate date {day.isoformat()} (first seen on row {seen[day]})")
        seen[day] = line
        adj = None
        if adj_pos is not None and cells[adj_pos] != "":
            adj = _parse_float(cells[adj_pos], line, ADJ_CLOSE)
        bars.append(OhlcvBar(
            date=day,
            open=_parse_float(cells[pos["Open"]], line, "Open"),
            high=_parse_float(cells[pos["High"]], line, "High"),
            low=_parse_float(cells[pos["Low"]], line, "Low"),
            close=_parse_float(cells[pos["Close"]], line, "Close"),
            volume=_parse_volume(cells[pos["Volume"]], line),
            adj_close=adj,
        ))
    bars.sort(key=lambda b: b.date)
    return PriceSeries(symbol, tuple(bars))


def read_ohlcv_csv(path, date_format: str = DEFAULT_DATE_FORMAT) -> PriceSeries:
    from pathlib import Path

    path = Path(path)
    with open(path, "rb") as fh:
        return parse_ohlcv_csv(fh, date_format, symbol=path.stem)


def serialize_ohlcv_csv(series: PriceSeries, date_format: str = DEFAULT_DATE_FORMAT) -> str:
    """Inverse of :func:`parse_ohlcv_csv`; floats are written with ``repr``."""
    with_adj = any(b.adj_close is not None for b in series.bars)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(REQUIRED_COLUMNS) + ([ADJ_CLOSE] if with_adj else []))
    for b in series.bars:
        row = [b.date.strftime(date_format), repr(b.open), repr(b.high), repr(b.low),
               repr(b.close), str(b.volume)]
        if with_adj:
            row.append("" if b.adj_close is None else repr(b.adj_close))
        writer.writerow(row)
    return out.getvalue()


def validate_series(series: PriceSeries) -> ValidationReport:
    flags = [check_bar(b) for b in series.bars]
    flagged = tuple((i, f) for i, f in enumerate(flags) if f != VALID)
    return ValidationReport(total_rows=len(flags), valid=len(flags) - len(flagged), flagged=flagged)
