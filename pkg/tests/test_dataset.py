import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsvm_trend.dataset import (DOWN, UP, Dataset, LabeledExample, NormStats, SplitPlan,
                                apply_normalizer, build_dataset, comparison_split,
                                fit_normalizer, invert_normalizer, label_direction,
                                protocol_split, stratified_parameter_split)
from fsvm_trend.errors import DegenerateFeatureError, ParameterError, ShapeError
from fsvm_trend.evaluation import fit_on_rows
from fsvm_trend.fsvm import fsvm_preset, nafsvm_preset
from fsvm_trend.indicators import compute_feature_matrix
from fsvm_trend.synthetic import make_trending_series


def random_dataset(seed, n=None, d=3):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(300, 1500))
    start = date(1990 + int(rng.integers(0, 20)), 1, 1)
    step = int(rng.integers(1, 4))
    dates = tuple(start + timedelta(days=step * k) for k in range(n))
    up_rate = rng.uniform(0.2, 0.8)
    labels = np.where(rng.random(n) < up_rate, UP, DOWN)
    return Dataset(dates, rng.normal(size=(n, d)), labels, tuple(f"f{k}" for k in range(d)))


# -- labels ---------------------------------------------------------------------------

def test_label_direction_and_tie_rule():
    closes = [1.0, 2.0, 2.0, 1.5]
    np.testing.assert_array_equal(label_direction(closes), [UP, DOWN, DOWN])
    np.testing.assert_array_equal(label_direction(closes, tie_label=UP), [UP, UP, DOWN])
    with pytest.raises(ParameterError):
        label_direction([1.0])


def test_build_dataset_aligns_next_close():
    series = make_trending_series(120, seed=4)
    fm = compute_feature_matrix(series)
    data = build_dataset(series, fm)
    assert len(data) == len(fm) - 1
    closes = {d: c for d, c in zip(series.dates, series.closes)}
    dates = series.dates
    for k in (0, 17, len(data) - 1):
        t = dates.index(data.dates[k])
        expected = UP if closes[dates[t + 1]] > closes[dates[t]] else DOWN
        assert data.labels[k] == expected


def test_dataset_csv_roundtrip_with_plan():
    data = random_dataset(1, n=400)
    plan = protocol_split(data, seed=3)
    text = data.to_csv(plan)
    header = text.splitlines()[0].split(",")
    assert header[0] == "date" and header[-3:] == ["label", "split", "param"]
    back = Dataset.from_csv(text)
    assert back.dates == data.dates and back.columns == data.columns
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)


def test_examples_roundtrip():
    data = random_dataset(2, n=50)
    ex = data.examples()
    assert isinstance(ex[0], LabeledExample)
    back = Dataset.from_examples(ex, data.columns)
    np.testing.assert_array_equal(back.features, data.features)


# -- acceptance: split invariants ------------------------------------------------------

@pytest.mark.acceptance("splits")
@pytest.mark.parametrize("seed", range(20))
def test_parameter_counts_match_fraction(seed):
    data = random_dataset(1000 + seed)
    fraction = [0.05, 0.1, 0.2, 0.3][seed % 4]
    plan = stratified_parameter_split(data, fraction, seed=seed)
    years, labels = data.years, data.labels
    drawn = plan.parameter_counts()
    for (y, c) in {(int(a), int(b)) for a, b in zip(years, labels)}:
        full = int(((years == y) & (labels == c)).sum())
        got = int(sum(1 for i in plan.parameter_set if years[i] == y and labels[i] == c))
        assert got == drawn[(y, c)]
        assert abs(got - fraction * full) <= 1, (y, c, got, full)
    assert set(plan.param_train) | set(plan.param_holdout) == set(plan.parameter_set)
    assert not set(plan.param_train) & set(plan.param_holdout)


@pytest.mark.acceptance("splits")
@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_same_seed_same_plan(seed):
    data = random_dataset(seed % 97, n=500)
    a = protocol_split(data, seed=seed)
    b = protocol_split(data, seed=seed)
    assert a == b
    assert SplitPlan.from_json(a.to_json()) == a


@pytest.mark.acceptance("splits")
@pytest.mark.parametrize("preset", [fsvm_preset(C=1.0, floor=0.5),
                                    nafsvm_preset(C=10.0, gamma=1.0, floor=0.3)])
def test_leakage_probe(preset):
    """Scrambling holdout rows leaves every trained parameter bit-identical."""
    series = make_trending_series(700, seed=11)
    data = build_dataset(series, compute_feature_matrix(series))
    plan = protocol_split(data, seed=5)
    rng = np.random.default_rng(0)

    def scrambled(rows):
        feats = data.features.copy()
        labels = data.labels.copy()
        rows = list(rows)
        feats[rows] = rng.normal(0, 1e3, size=(len(rows), feats.shape[1]))
        labels[rows] = -labels[rows]
        return Dataset(data.dates, feats, labels, data.columns)

    for train_rows, hold_rows in ((plan.train_set, plan.holdout_set),
                                  (plan.param_train, plan.param_holdout)):
        base = fit_on_rows(data, train_rows, preset)
        probe = fit_on_rows(scrambled(hold_rows), train_rows, preset)
        assert base.to_json() == probe.to_json()
        assert base.bias == probe.bias
        np.testing.assert_array_equal(base.alphas, probe.alphas)
        np.testing.assert_array_equal(base.norm_stats.location, probe.norm_stats.location)


# -- split details ---------------------------------------------------------------------

def test_small_cells_are_skipped():
    dates = (date(2000, 1, 3), date(2001, 1, 3), date(2001, 1, 4), date(2001, 1, 5))
    data = Dataset(dates, np.zeros((4, 1)), np.array([UP, UP, UP, DOWN]))
    plan = stratified_parameter_split(data, 0.5, seed=0)
    assert set(plan.skipped) == {(2000, UP), (2001, DOWN)}
    assert plan.parameter_counts()[(2001, UP)] == 1


def test_comparison_split_keeps_a_holdout_per_cell():
    data = random_dataset(7, n=400)
    plan = comparison_split(data, 0.99, seed=1)
    cells_hold = {(data.years[i], data.labels[i]) for i in plan.holdout_set}
    cells_all = set(zip(data.years, data.labels))
    assert cells_hold == cells_all
    assert sorted(plan.train_set + plan.holdout_set) == list(range(len(data)))


def test_comparison_split_round_half_up():
    dates = tuple(date(2000, 1, 1) + timedelta(days=k) for k in range(4))
    data = Dataset(dates, np.zeros((4, 1)), np.array([UP] * 4))
    # 0.625 * 4 = 2.5 rounds up to 3
    assert len(comparison_split(data, 0.625, seed=0).train_set) == 3


def test_chronological_split():
    data = random_dataset(8, n=100)
    plan = comparison_split(data, 0.8, chronological=True)
    assert plan.train_set == tuple(range(80)) and plan.holdout_set == tuple(range(80, 100))


def test_disjoint_protocol():
    data = random_dataset(9, n=800)
    plan = protocol_split(data, seed=2, disjoint=True)
    assert not set(plan.parameter_set) & (set(plan.train_set) | set(plan.holdout_set))
    labels = plan.split_labels(len(data))
    assert all(labels[i] == "param" for i in plan.parameter_set)
    shared = protocol_split(data, seed=2)
    assert len(shared.train_set) + len(shared.holdout_set) == len(data)


@pytest.mark.parametrize("kwargs", [dict(param_fraction=0), dict(param_fraction=1.2),
                                    dict(train_fraction=1.0), dict(param_train_fraction=0)])
def test_bad_fractions(kwargs):
    with pytest.raises(ParameterError):
        protocol_split(random_dataset(1, n=200), **kwargs)


def test_comparison_train_must_exceed_param_train():
    with pytest.raises(ParameterError, match="must be larger"):
        protocol_split(random_dataset(1, n=300), param_fraction=0.9, param_train_fraction=0.9,
                       train_fraction=0.05)


# -- normalisation ---------------------------------------------------------------------

@given(st.integers(0, 10_000), st.sampled_from(["minmax", "zscore"]))
@settings(max_examples=30, deadline=None)
def test_normalizer_roundtrip(seed, method):
    rng = np.random.default_rng(seed)
    X = rng.normal(5, 3, size=(40, 4))
    rows = rng.choice(40, 25, replace=False)
    stats = fit_normalizer(X, rows, method)
    Z = apply_normalizer(stats, X)
    np.testing.assert_allclose(invert_normalizer(stats, Z), X, rtol=1e-12, atol=1e-12)
    if method == "minmax":
        assert Z[rows].min() == 0.0 and math.isclose(Z[rows].max(), 1.0)
    assert NormStats.from_dict(stats.to_dict()).method == method


def test_normalizer_uses_only_given_rows():
    X = np.arange(20.0).reshape(10, 2)
    stats = fit_normalizer(X, [0, 1, 2])
    np.testing.assert_array_equal(stats.location, [0.0, 1.0])
    np.testing.assert_array_equal(stats.scale, [4.0, 4.0])


def test_normalizer_errors():
    data = Dataset((date(2000, 1, 1), date(2000, 1, 2)), np.array([[1.0, 2.0], [1.0, 3.0]]),
                   np.array([UP, DOWN]), ("flat", "moving"))
    with pytest.raises(DegenerateFeatureError, match="flat"):
        fit_normalizer(data, [0, 1])
    stats = fit_normalizer(np.eye(3), [0, 1, 2])
    with pytest.raises(ShapeError):
        apply_normalizer(stats, np.zeros((2, 4)))
    with pytest.raises(ParameterError):
        fit_normalizer(np.eye(3), [0, 1, 2], "robust")
