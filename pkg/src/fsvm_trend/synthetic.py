"""Synthetic trending OHLCV series: drift + sinusoid + i.i.d. noise on the close.

    python -m fsvm_trend.synthetic out.csv --bars 2000 --seed 20240611
"""

from __future__ import annotations

import argparse
from datetime import date, timedelta

import numpy as np

from .market_data import OhlcvBar, PriceSeries, serialize_ohlcv_csv

FIXTURE_SEED = 20240611
FIXTURE_BARS = 2000


def business_days(start: date, n: int) -> list[date]:
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def make_trending_series(n: int = FIXTURE_BARS, seed: int = FIXTURE_SEED, start: date = date(2008, 1, 1),
                         base: float = 100.0, drift: float = 0.03, amplitude: float = 12.0,
                         period: float = 90.0, noise: float = 0.5) -> PriceSeries:
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    trend = base + drift * t + amplitude * np.sin(2.0 * np.pi * t / period)
    close = trend + noise * rng.standard_normal(n)
    open_ = np.empty(n)
    open_[0] = close[0]
    open_[1:] = close[:-1] + 0.3 * noise * rng.standard_normal(n - 1)
    wick = np.abs(rng.normal(0.0, 0.5 * noise, size=(2, n)))
    high = np.maximum(open_, close) + wick[0]
    low = np.minimum(open_, close) - wick[1]
    volume = rng.integers(1_000_000, 5_000_000, size=n)
    bars = tuple(
        OhlcvBar(d, round(float(o), 4), round(float(h), 4), round(float(lo), 4), round(float(c), 4),
                 int(v), round(float(c), 4))
        for d, o, h, lo, c, v in zip(business_days(start, n), open_, high, low, close, volume))
    return PriceSeries("synthetic", bars)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--bars", type=int, default=FIXTURE_BARS)
    ap.add_argument("--seed", type=int, default=FIXTURE_SEED)
    args = ap.parse_args(argv)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_ohlcv_csv(make_trending_series(args.bars, args.seed)))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
