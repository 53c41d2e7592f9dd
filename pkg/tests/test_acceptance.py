"""End-to-end acceptance checks on the committed 2000-bar fixture.

The golden files live in tests/golden and are regenerated with
``python3 tests/make_golden.py``. PNG figures are never compared.
"""

import json
import time
from pathlib import Path

import pytest

from fsvm_trend.cli import main
from fsvm_trend.market_data import serialize_ohlcv_csv
from fsvm_trend.synthetic import FIXTURE_BARS, FIXTURE_SEED, make_trending_series

from make_golden import CONFIG, COPIED, GOLDEN, manifest, normalized_bytes

FIXTURE = CONFIG.parent / "trending_2000.csv"
TIME_LIMIT = 60.0


def run_full(out: Path, jobs: int = 1) -> float:
    start = time.perf_counter()
    status = main(["full", "--config", str(CONFIG), "--out", str(out), "--jobs", str(jobs)])
    elapsed = time.perf_counter() - start
    assert status == 0
    return elapsed


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench") / "run"
    return out, run_full(out)


@pytest.mark.acceptance("benchmark")
def test_fixture_is_reproducible_from_committed_seed():
    series = make_trending_series(FIXTURE_BARS, seed=FIXTURE_SEED)
    assert FIXTURE.read_text() == serialize_ohlcv_csv(series)


@pytest.mark.slow
@pytest.mark.acceptance("benchmark")
def test_full_run_within_time_limit(full_run):
    _, elapsed = full_run
    assert elapsed < TIME_LIMIT


@pytest.mark.slow
@pytest.mark.acceptance("benchmark")
def test_holdout_accuracy_targets(full_run):
    out, _ = full_run
    cmp = json.loads((out / "comparison.json").read_text())
    assert cmp["a"]["name"] == "fsvm" and cmp["b"]["name"] == "nafsvm"
    fsvm = cmp["a"]["holdout"]["accuracy"]
    nafsvm = cmp["b"]["holdout"]["accuracy"]
    assert nafsvm >= 0.60, f"NA-FSVM holdout accuracy {nafsvm:.4f}"
    assert nafsvm >= fsvm - 0.02, f"NA-FSVM {nafsvm:.4f} vs FSVM {fsvm:.4f}"


@pytest.mark.slow
@pytest.mark.acceptance("benchmark")
def test_outputs_match_golden(full_run):
    out, _ = full_run
    for name in COPIED:
        assert (out / name).read_bytes() == (GOLDEN / "reports" / name).read_bytes(), name
    expected = json.loads((GOLDEN / "manifest.json").read_text())
    assert manifest(out) == expected


@pytest.mark.slow
@pytest.mark.acceptance("determinism")
def test_full_is_deterministic(full_run, tmp_path):
    first, _ = full_run
    # a second run with a different worker count must not change a byte
    second = tmp_path / "again"
    run_full(second, jobs=2)
    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    for name in names:
        a, b = first / name, second / name
        if name == "config.resolved":
            assert normalized_bytes(a) == normalized_bytes(b)
        else:
            assert a.read_bytes() == b.read_bytes(), name
