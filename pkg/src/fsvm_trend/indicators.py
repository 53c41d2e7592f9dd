"""Technical indicators used as model inputs.

Every indicator is a function of a fixed trailing window of bars: the value at
day ``t`` depends only on bars ``t - lookback .. t``. Two evaluation paths
exist: vectorised batch functions over whole arrays, and :class:`IndicatorStream`
which is fed one bar at a time and evaluates the scalar definitions directly.
The test suite holds them equal.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateRangeError, ParameterError
from .market_data import OhlcvBar, PriceSeries

AD_FALLBACK = 50.0
STOCH_FLAT = 50.0
WILLIAMS_FLAT = -50.0
CCI_CONSTANT = 0.015

INDICATOR_NAMES = (
    "sma", "impetus", "addition_delivery", "wma", "stoch_k", "stoch_d",
    "rsi", "macd", "williams_r", "cci",
)


_PARAM_DEFAULTS = {("stoch_d", "smooth"): 3.0, ("macd", "fast"): 12.0}


@dataclass(frozen=True)
class IndicatorSpec:
    name: str
    window: int
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.name not in INDICATOR_NAMES:
            raise ParameterError(f"unknown indicator {self.name!r}")
        if int(self.window) != self.window or self.window < 1:
            raise ParameterError(f"{self.name}: window must be a positive integer, got {self.window}")
        params = dict(self.params)
        # drop parameters equal to their default so equal indicators compare equal
        params = {k: float(v) for k, v in params.items() if _PARAM_DEFAULTS.get((self.name, k)) != v}
        object.__setattr__(self, "params", tuple(sorted(params.items())))
        if self.name == "stoch_d" and self.param("smooth", 3) < 1:
            raise ParameterError("stoch_d: smooth must be >= 1")
        if self.name == "macd" and not 1 <= self.param("fast", 12) <= self.window:
            raise ParameterError("macd: fast span must lie in [1, window]")

    def param(self, key: str, default: float) -> float:
        return dict(self.params).get(key, default)

    @property
    def column(self) -> str:
        return f"{self.name}_{self.window}"

    @property
    def lookback(self) -> int:
        """Number of bars before ``t`` needed to define the value at ``t``."""
        if self.name in ("impetus", "rsi"):
            return self.window
        if self.name == "addition_delivery":
            return 0
        if self.name == "stoch_d":
            return self.window - 1 + int(self.param("smooth", 3)) - 1
        return self.window - 1


DEFAULT_SPECS: tuple[IndicatorSpec, ...] = (
    IndicatorSpec("sma", 30),
    IndicatorSpec("impetus", 4),
    IndicatorSpec("addition_delivery", 1),
    IndicatorSpec("wma", 10),
    IndicatorSpec("stoch_k", 14),
    IndicatorSpec("stoch_d", 14),
    IndicatorSpec("rsi", 14),
    IndicatorSpec("macd", 26),
    IndicatorSpec("williams_r", 14),
    IndicatorSpec("cci", 20),
)


def parse_spec(text: str) -> IndicatorSpec:
    """``name_window`` or ``name_window:key=value,...`` -> spec."""
    head, _, tail = text.strip().partition(":")
    name, _, window = head.rpartition("_")
    if not name or not window.isdigit():
        raise ParameterError(f"bad indicator spec {text!r}; expected <name>_<window>")
    params = {}
    if tail:
        for item in tail.split(","):
            key, _, value = item.partition("=")
            params[key.strip()] = float(value)
    return IndicatorSpec(name, int(window), tuple(sorted(params.items())))


def format_spec(spec: IndicatorSpec) -> str:
    if not spec.params:
        return spec.column
    return spec.column + ":" + ",".join(f"{k}={v:g}" for k, v in spec.params)


# -- scalar-facing operations -------------------------------------------------

def moving_average(closes: Sequence[float], window: int) -> np.ndarray:
    """Simple moving average; output[k] is the mean of closes[k : k + window]."""
    closes = np.asarray(closes, dtype=np.float64)
    if window < 1 or len(closes) < window:
        raise ParameterError(f"moving_average needs 1 <= window <= {len(closes)}, got {window}")
    return sliding_window_view(closes, window).mean(axis=1)


def impetus(closes: Sequence[float], n: int) -> np.ndarray:
    """Momentum ``close[t] - close[t - n]`` for t >= n."""
    closes = np.asarray(closes, dtype=np.float64)
    if n < 1 or n >= len(closes):
        raise ParameterError(f"impetus needs 1 <= n < {len(closes)}, got {n}")
    return closes[n:] - closes[:-n]


def addition_delivery(bar: OhlcvBar) -> float:
    """Position of the close below the high, as a percentage of the day's range.

    0 when the close is at the high, 100 at the low.
    """
    rng = bar.high - bar.low
    if rng <= 0:
        raise DegenerateRangeError(f"{bar.date}: high == low, range is empty")
    return (bar.high - bar.close) / rng * 100.0


def ema_weights(span: float, length: int) -> np.ndarray:
    """Normalised exponential weights, most recent bar first, truncated to ``length`` bars."""
    alpha = 2.0 / (span + 1.0)
    w = (1.0 - alpha) ** np.arange(length, dtype=np.float64)
    return w / w.sum()


# -- batch evaluation -----------------------------------------------------------

def _windows(x: np.ndarray, w: int) -> np.ndarray:
    return sliding_window_view(x, w)


def _pad(values: np.ndarray, n: int) -> np.ndarray:
    out = np.full(n, np.nan)
    if len(values):
        out[n - len(values):] = values
    return out


def _stoch_k(high, low, close, w):
    hh = _windows(high, w).max(axis=1)
    ll = _windows(low, w).min(axis=1)
    c = close[w - 1:]
    span = hh - ll
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(span > 0, 100.0 * (c - ll) / span, STOCH_FLAT)
    return k


def batch_indicator(spec: IndicatorSpec, high: np.ndarray, low: np.ndarray,
                    close: np.ndarray) -> np.ndarray:
    """Full-length column with NaN over the first ``spec.lookback`` days."""
    n = len(close)
    w = spec.window
    if n <= spec.lookback:
        return np.full(n, np.nan)
    name = spec.name
    if name == "sma":
        vals = moving_average(close, w)
    elif name == "impetus":
        vals = impetus(close, w)
    elif name == "addition_delivery":
        span = high - low
        flat = span <= 0
        if flat.any():
            warnings.warn(f"{int(flat.sum())} bar(s) with high == low; addition_delivery set to "
                          f"{AD_FALLBACK:g}", RuntimeWarning, stacklevel=3)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(flat, AD_FALLBACK, (high - close) / np.where(flat, 1.0, span) * 100.0)
    elif name == "wma":
        weights = np.arange(1, w + 1, dtype=np.float64)
        vals = _windows(close, w) @ (weights / weights.sum())
    elif name == "stoch_k":
        vals = _stoch_k(high, low, close, w)
    elif name == "stoch_d":
        smooth = int(spec.param("smooth", 3))
        vals = _windows(_stoch_k(high, low, close, w), smooth).mean(axis=1)
    elif name == "rsi":
        diffs = _windows(np.diff(close), w)
        gain = np.where(diffs > 0, diffs, 0.0).mean(axis=1)
        loss = np.where(diffs < 0, -diffs, 0.0).mean(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(loss > 0, 100.0 - 100.0 / (1.0 + gain / loss), 100.0)
    elif name == "macd":
        fast = spec.param("fast", 12)
        # window view is oldest-first, weights are newest-first
        weights = (ema_weights(fast, w) - ema_weights(w, w))[::-1]
        vals = _windows(close, w) @ weights
    elif name == "williams_r":
        hh = _windows(high, w).max(axis=1)
        ll = _windows(low, w).min(axis=1)
        span = hh - ll
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(span > 0, -100.0 * (hh - close[w - 1:]) / span, WILLIAMS_FLAT)
    elif name == "cci":
        tp = (high + low + close) / 3.0
        win = _windows(tp, w)
        mean = win.mean(axis=1)
        dev = np.abs(win - mean[:, None]).mean(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(dev > 0, (tp[w - 1:] - mean) / (CCI_CONSTANT * dev), 0.0)
    else:  # pragma: no cover - guarded by IndicatorSpec
        raise ParameterError(name)
    return _pad(np.asarray(vals, dtype=np.float64), n)


# -- streaming evaluation ---------------------------------------------------------

class IndicatorStream:
    """Feeds bars one at a time; ``push`` returns the value at the newest bar or None.

    Uses plain-Python scalar arithmetic over the retained window only.
    """

    def __init__(self, spec: IndicatorSpec):
        self.spec = spec
        self._bars: deque[tuple[float, float, float]] = deque(maxlen=spec.lookback + 1)

    def push(self, high: float, low: float, close: float) -> float | None:
        self._bars.append((high, low, close))
        if len(self._bars) <= self.spec.lookback:
            return None
        return self._value()

    def _value(self) -> float:
        spec = self.spec
        w = spec.window
        bars = list(self._bars)
        highs = [b[0] for b in bars]
        lows = [b[1] for b in bars]
        closes = [b[2] for b in bars]
        name = spec.name
        if name == "sma":
            return math.fsum(closes[-w:]) / w
        if name == "impetus":
            return closes[-1] - closes[-1 - w]
        if name == "addition_delivery":
            h, lo, c = bars[-1]
            if h <= lo:
                return AD_FALLBACK
            return (h - c) / (h - lo) * 100.0
        if name == "wma":
            num = math.fsum((k + 1) * c for k, c in enumerate(closes[-w:]))
            return num / (w * (w + 1) / 2)
        if name == "stoch_k":
            return _scalar_stoch(highs[-w:], lows[-w:], closes[-1])
        if name == "stoch_d":
            smooth = int(spec.param("smooth", 3))
            ks = []
            for end in range(len(bars) - smooth + 1, len(bars) + 1):
                ks.append(_scalar_stoch(highs[end - w:end], lows[end - w:end], closes[end - 1]))
            return math.fsum(ks) / smooth
        if name == "rsi":
            diffs = [b - a for a, b in zip(closes[-w - 1:-1], closes[-w:])]
            gain = math.fsum(d for d in diffs if d > 0) / w
            loss = math.fsum(-d for d in diffs if d < 0) / w
            if loss == 0:
                return 100.0
            return 100.0 - 100.0 / (1.0 + gain / loss)
        if name == "macd":
            fast = spec.param("fast", 12)
            recent = closes[::-1][:w]
            return _scalar_ema(recent, fast) - _scalar_ema(recent, w)
        if name == "williams_r":
            hh, ll = max(highs[-w:]), min(lows[-w:])
            if hh <= ll:
                return WILLIAMS_FLAT
            return -100.0 * (hh - closes[-1]) / (hh - ll)
        if name == "cci":
            tp = [(h + lo + c) / 3.0 for h, lo, c in bars[-w:]]
            mean = math.fsum(tp) / w
            dev = math.fsum(abs(x - mean) for x in tp) / w
            if dev == 0:
                return 0.0
            return (tp[-1] - mean) / (CCI_CONSTANT * dev)
        raise ParameterError(name)  # pragma: no cover


def _scalar_stoch(highs, lows, close):
    hh, ll = max(highs), min(lows)
    if hh <= ll:
        return STOCH_FLAT
    return 100.0 * (close - ll) / (hh - ll)


def _scalar_ema(newest_first, span):
    alpha = 2.0 / (span + 1.0)
    weights = [(1.0 - alpha) ** k for k in range(len(newest_first))]
    return math.fsum(wt * c for wt, c in zip(weights, newest_first)) / math.fsum(weights)


def stream_indicator(spec: IndicatorSpec, high, low, close) -> np.ndarray:
    stream = IndicatorStream(spec)
    out = [stream.push(float(h), float(lo), float(c)) for h, lo, c in zip(high, low, close)]
    return np.array([np.nan if v is None else v for v in out], dtype=np.float64)


# -- feature matrix ----------------------------------------------------------------

@dataclass(frozen=True)
class FeatureMatrix:
    dates: tuple[date, ...]
    columns: tuple[IndicatorSpec, ...]
    values: np.ndarray
    warmup: int
    excluded: tuple[date, ...] = field(default=())

    @property
    def column_names(self) -> list[str]:
        return [c.column for c in self.columns]

    def __len__(self) -> int:
        return len(self.dates)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["date"] + self.column_names)
        for d, row in zip(self.dates, self.values):
            writer.writerow([d.isoformat()] + [repr(float(v)) for v in row])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, columns: Sequence[IndicatorSpec] | None = None,
                 warmup: int = 0) -> "FeatureMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if columns is None:
            columns = tuple(parse_spec(h) for h in header[1:])
        dates = tuple(date.fromisoformat(r[0]) for r in body)
        values = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
        return cls(dates, tuple(columns), values.reshape(len(body), len(header) - 1), warmup)


def required_length(specs: Sequence[IndicatorSpec]) -> int:
    return max(s.lookback for s in specs) + 1


def compute_feature_matrix(series: PriceSeries,
                           specs: Sequence[IndicatorSpec] = DEFAULT_SPECS) -> FeatureMatrix:
    """Indicator matrix over the VALID bars of ``series``.

    Flagged bars are skipped before any lookback is taken and listed in
    ``excluded``. The first ``warmup`` valid days are dropped.
    """
    specs = tuple(specs)
    if not specs:
        raise ParameterError("at least one indicator spec is required")
    mask = series.valid_mask
    excluded = tuple(b.date for b, ok in zip(series.bars, mask) if not ok)
    clean = series.subset(mask)
    need = required_length(specs)
    if len(clean) < need:
        raise ParameterError(
            f"insufficient history: {len(clean)} valid bars, at least {need} required")
    high, low, close = clean.column("high"), clean.column("low"), clean.column("close")
    warmup = need - 1
    cols = [batch_indicator(s, high, low, close)[warmup:] for s in specs]
    values = np.column_stack(cols)
    if not np.isfinite(values).all():  # pragma: no cover - would be an indicator bug
        raise ParameterError("non-finite indicator values after warmup")
    return FeatureMatrix(tuple(clean.dates[warmup:]), specs, values, warmup, excluded)
