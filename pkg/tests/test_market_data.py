import io
import json
from datetime import date, timedelta
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from fsvm_trend.errors import DuplicateDateError, ParseError
from fsvm_trend.market_data import (VALID, OhlcvBar, PriceSeries, check_bar, parse_ohlcv_csv,
                                    read_ohlcv_csv, serialize_ohlcv_csv, validate_series)

DATA = Path(__file__).parent / "data"
HEADER = "Date,Open,High,Low,Close,Volume,Adj Close\n"


def bar(o=10.0, h=12.0, lo=9.0, c=11.0, v=100, adj=None, d=date(2020, 1, 2)):
    return OhlcvBar(d, o, h, lo, c, v, adj)


@pytest.mark.acceptance("indicators")
def test_reference_corrupt_row_is_flagged():
    series = read_ohlcv_csv(DATA / "flag_reference.csv")
    assert len(series) == 20
    report = validate_series(series)
    flagged = {series.dates[i]: rule for i, rule in report.flagged}
    assert flagged[date(1993, 10, 1)] == "open < low"
    # the 1996 row has the same digit-loss defect (122 vs 1214)
    assert flagged[date(1996, 10, 1)] == "open < low"
    assert report.valid == 18
    lines = report.to_jsonl(series.dates).splitlines()
    assert {"date": "1993-10-01", "row": 3, "rule": "open < low"} in map(json.loads, lines)


@pytest.mark.parametrize("kwargs, rule", [
    (dict(o=0.0), "nonpositive price"),
    (dict(c=-1.0), "nonpositive price"),
    (dict(adj=0.0), "nonpositive adj close"),
    (dict(v=-5), "negative volume"),
    (dict(o=8.0), "open < low"),
    (dict(o=13.0), "open > high"),
    (dict(c=8.5), "close < low"),
    (dict(c=12.5), "close > high"),
    (dict(), VALID),
    (dict(o=9.0, h=9.0, lo=9.0, c=9.0), VALID),
])
def test_check_bar_rules(kwargs, rule):
    assert check_bar(bar(**kwargs)) == rule


def test_first_rule_wins():
    # breaks both "open < low" and "close > high"; the earlier rule is reported
    assert check_bar(bar(o=1.0, c=50.0)) == "open < low"


def test_parse_sorts_and_strips_bom():
    text = "﻿" + HEADER + "03-01-2020,1,2,1,2,10,2\n02-01-2020,1,2,1,1.5,10,\n"
    series = parse_ohlcv_csv(text.encode())
    assert series.dates == [date(2020, 1, 2), date(2020, 1, 3)]
    assert series.bars[0].adj_close is None


def test_parse_accepts_streams_and_custom_format():
    text = "Date,Open,High,Low,Close,Volume\n2020-01-02,1,2,1,2,10\n"
    series = parse_ohlcv_csv(io.StringIO(text), date_format="%Y-%m-%d")
    assert series.bars[0] == OhlcvBar(date(2020, 1, 2), 1.0, 2.0, 1.0, 2.0, 10, None)


@pytest.mark.parametrize("body, msg", [
    ("02-01-2020,1,2,1,2,10,2\n02-01-2020,1,2,1,2,10,2\n", "row 3: duplicate date"),
    ("02-01-2020,1,x,1,2,10,2\n", "row 2: non-numeric High"),
    ("2020/01/02,1,2,1,2,10,2\n", "row 2: unparseable date"),
    ("02-01-2020,1,2,1,2,10.5,2\n", "fractional Volume"),
    ("02-01-2020,1,2\n", "row 2: expected 7 fields"),
    ("02-01-2020,1,2,1,nan,10,2\n", "non-finite Close"),
])
def test_parse_errors_name_the_row(body, msg):
    with pytest.raises(ParseError, match=msg):
        parse_ohlcv_csv(HEADER + body)


def test_duplicate_date_error_type():
    with pytest.raises(DuplicateDateError):
        parse_ohlcv_csv(HEADER + "02-01-2020,1,2,1,2,10,2\n02-01-2020,1,2,1,2,10,2\n")


def test_missing_columns_and_empty_input():
    with pytest.raises(ParseError, match="Volume"):
        parse_ohlcv_csv("Date,Open,High,Low,Close\n")
    with pytest.raises(ParseError, match="empty"):
        parse_ohlcv_csv("")


def test_price_series_rejects_unordered_bars():
    with pytest.raises(ParseError):
        PriceSeries("x", (bar(d=date(2020, 1, 3)), bar(d=date(2020, 1, 2))))


prices = st.floats(0.01, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def bars_strategy(draw):
    n = draw(st.integers(1, 30))
    out = []
    for k in range(n):
        vals = sorted(draw(st.lists(prices, min_size=4, max_size=4)))
        lo, a, b, h = vals
        o, c = (a, b) if draw(st.booleans()) else (b, a)
        adj = draw(st.one_of(st.none(), prices))
        out.append(OhlcvBar(date(2000, 1, 3) + timedelta(days=k), o, h, lo, c,
                            draw(st.integers(0, 10**12)), adj))
    return PriceSeries("", tuple(out))


@given(bars_strategy())
@settings(max_examples=60, deadline=None)
def test_serialize_parse_roundtrip(series):
    back = parse_ohlcv_csv(serialize_ohlcv_csv(series))
    assert back.bars == series.bars
    assert all(f == VALID for f in back.flags)
