"""Direction labels, stratified splits and train-only feature normalisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Sequence

import numpy as np

from .errors import DegenerateFeatureError, ParameterError, ParseError, ShapeError
from .indicators import FeatureMatrix
from .market_data import PriceSeries

UP = 1
DOWN = -1


@dataclass(frozen=True)
class LabeledExample:
    date: date
    features: tuple[float, ...]
    label: int


@dataclass(frozen=True)
class Dataset:
    """Column-oriented view of a list of :class:`LabeledExample`."""

    dates: tuple[date, ...]
    features: np.ndarray
    labels: np.ndarray
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.labels)
        if self.features.ndim != 2 or len(self.features) != n or len(self.dates) != n:
            raise ShapeError("dates, features and labels must align")
        if len(self.labels) and not np.isin(self.labels, (UP, DOWN)).all():
            raise ParameterError("labels must be +1 or -1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def years(self) -> np.ndarray:
        return np.array([d.year for d in self.dates], dtype=np.int64)

    def examples(self) -> list[LabeledExample]:
        return [LabeledExample(d, tuple(map(float, x)), int(y))
                for d, x, y in zip(self.dates, self.features, self.labels)]

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample], columns=()) -> "Dataset":
        if not examples:
            return cls((), np.zeros((0, len(columns))), np.zeros(0, dtype=np.int64), tuple(columns))
        return cls(tuple(e.date for e in examples),
                   np.array([e.features for e in examples], dtype=np.float64),
                   np.array([e.label for e in examples], dtype=np.int64), tuple(columns))

    def to_csv(self, plan: "SplitPlan | None" = None) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        header = ["date", *self.columns, "label"]
        if plan is not None:
            header += ["split", "param"]
            split = plan.split_labels(len(self))
            param = np.zeros(len(self), dtype=bool)
            param[list(plan.parameter_set)] = True
        writer.writerow(header)
        for i, (d, x, y) in enumerate(zip(self.dates, self.features, self.labels)):
            row = [d.isoformat(), *(repr(float(v)) for v in x), int(y)]
            if plan is not None:
                row += [split[i], int(param[i])]
            writer.writerow(row)
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        """Inverse of :meth:`to_csv`; ``split``/``param`` columns are ignored."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows or rows[0][:1] != ["date"] or "label" not in rows[0]:
            raise ParseError("dataset CSV needs a header starting with 'date' and a 'label' column")
        header = rows[0]
        k = header.index("label")
        body = rows[1:]
        dates = tuple(date.fromisoformat(r[0]) for r in body)
        feats = np.array([[float(v) for v in r[1:k]] for r in body], dtype=np.float64)
        labels = np.array([int(r[k]) for r in body], dtype=np.int64)
        return cls(dates, feats.reshape(len(body), k - 1), labels, tuple(header[1:k]))


def label_direction(closes: Sequence[float] | PriceSeries, tie_label: int = DOWN) -> np.ndarray:
    """+1 if the next close is higher, -1 if lower; equal closes get ``tie_label``.

    The output is one shorter than the input. A :class:`PriceSeries` is reduced
    to its valid bars first.
    """
    if isinstance(closes, PriceSeries):
        closes = closes.subset(closes.valid_mask).closes
    closes = np.asarray(closes, dtype=np.float64)
    if len(closes) < 2:
        raise ParameterError("label_direction needs at least 2 closes")
    if tie_label not in (UP, DOWN):
        raise ParameterError("tie_label must be +1 or -1")
    diff = np.diff(closes)
    labels = np.where(diff > 0, UP, DOWN).astype(np.int64)
    labels[diff == 0] = tie_label
    return labels


def build_dataset(series: PriceSeries, features: FeatureMatrix, tie_label: int = DOWN) -> Dataset:
    """Pair each feature row with the direction of the following valid close.

    The last feature row has no next close and is dropped.
    """
    clean = series.subset(series.valid_mask)
    pos = {d: i for i, d in enumerate(clean.dates)}
    labels = label_direction(clean.closes, tie_label)
    idx = [pos[d] for d in features.dates]
    keep = [k for k, i in enumerate(idx) if i < len(labels)]
    return Dataset(tuple(features.dates[k] for k in keep),
                   features.values[keep],
                   labels[[idx[k] for k in keep]],
                   tuple(features.column_names))


# -- splits -------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    """Index partition of a :class:`Dataset`.

    ``parameter_set`` is the stratified subset used for hyper-parameter search,
    itself divided into ``param_train`` / ``param_holdout``. ``train_set`` /
    ``holdout_set`` drive the comparison experiment.
    """

    seed: int
    fractions: tuple[float, float]
    parameter_set: tuple[int, ...] = ()
    param_train: tuple[int, ...] = ()
    param_holdout: tuple[int, ...] = ()
    train_set: tuple[int, ...] = ()
    holdout_set: tuple[int, ...] = ()
    mode: str = "stratified"
    disjoint: bool = False
    skipped: tuple[tuple[int, int], ...] = ()
    cell_counts: tuple[tuple[int, int, int], ...] = ()

    def parameter_counts(self) -> dict[tuple[int, int], int]:
        """(year, label) -> number of examples drawn into the parameter set."""
        return {(y, c): n for y, c, n in self.cell_counts}

    def split_labels(self, n: int) -> list[str]:
        out = [""] * n
        for i in self.train_set:
            out[i] = "train"
        for i in self.holdout_set:
            out[i] = "holdout"
        for i in self.parameter_set:
            if self.disjoint or not out[i]:
                out[i] = "param"
        return out

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "fractions": list(self.fractions),
            "mode": self.mode,
            "disjoint": self.disjoint,
            "parameter_set": list(self.parameter_set),
            "param_train": list(self.param_train),
            "param_holdout": list(self.param_holdout),
            "train_set": list(self.train_set),
            "holdout_set": list(self.holdout_set),
            "skipped": [list(s) for s in self.skipped],
            "cell_counts": [list(c) for c in self.cell_counts],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(
            seed=int(d["seed"]), fractions=tuple(d["fractions"]),
            parameter_set=tuple(d["parameter_set"]), param_train=tuple(d["param_train"]),
            param_holdout=tuple(d["param_holdout"]), train_set=tuple(d["train_set"]),
            holdout_set=tuple(d["holdout_set"]), mode=d.get("mode", "stratified"),
            disjoint=bool(d.get("disjoint", False)),
            skipped=tuple(tuple(s) for s in d.get("skipped", ())),
            cell_counts=tuple(tuple(c) for c in d.get("cell_counts", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        return cls.from_dict(json.loads(text))


def _years_labels(examples) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(examples, Dataset):
        return examples.years, examples.labels
    years = np.array([e.date.year for e in examples], dtype=np.int64)
    labels = np.array([e.label for e in examples], dtype=np.int64)
    return years, labels


def _cells(years, labels, pool):
    """(year, label) -> sorted indices drawn from ``pool``, in sorted key order."""
    cells: dict[tuple[int, int], list[int]] = {}
    for i in pool:
        cells.setdefault((int(years[i]), int(labels[i])), []).append(int(i))
    return dict(sorted(cells.items()))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _divide_cells(cells, fraction, rng) -> tuple[list[int], list[int]]:
    """Per-cell proportional train/holdout assignment; holdout keeps >= 1 per cell."""
    train, holdout = [], []
    for members in cells.values():
        n = len(members)
        k = min(_round_half_up(fraction * n), n - 1)
        chosen = rng.permutation(members)
        train.extend(chosen[:k].tolist())
        holdout.extend(chosen[k:].tolist())
    return sorted(train), sorted(holdout)


def stratified_parameter_split(examples, fraction: float = 0.10, seed: int = 0,
                               train_fraction: float = 0.7) -> SplitPlan:
    """Draw ``floor(fraction * count)`` examples from every (year, class) cell.

    Cells with fewer than two members contribute nothing and are listed in
    ``skipped``. The drawn subset is divided per cell into ``param_train`` and
    ``param_holdout`` by ``train_fraction``.
    """
    if not 0 < fraction < 1:
        raise ParameterError(f"fraction must lie in (0, 1), got {fraction}")
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    years, labels = _years_labels(examples)
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    skipped, counts = [], []
    for (year, label), members in _cells(years, labels, range(len(labels))).items():
        if len(members) < 2:
            skipped.append((year, label))
            counts.append((year, label, 0))
            continue
        quota = math.floor(fraction * len(members))
        picked = rng.choice(members, size=quota, replace=False).tolist() if quota else []
        chosen.extend(picked)
        counts.append((year, label, quota))
    chosen.sort()
    p_train, p_hold = _divide_cells(_cells(years, labels, chosen), train_fraction, rng)
    return SplitPlan(seed=seed, fractions=(fraction, train_fraction),
                     parameter_set=tuple(chosen), param_train=tuple(p_train),
                     param_holdout=tuple(p_hold), skipped=tuple(skipped),
                     cell_counts=tuple(counts))


def comparison_split(examples, train_fraction: float = 0.8, seed: int = 0,
                     exclude: Sequence[int] = (), chronological: bool = False) -> SplitPlan:
    """Re-divide the examples (minus ``exclude``) into train and holdout.

    Stratified mode assigns ``round(train_fraction * n)`` members of each
    (year, class) cell to train, keeping at least one in holdout. Chronological
    mode puts the earliest ``train_fraction`` of the pool in train.
    """
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    years, labels = _years_labels(examples)
    excluded = set(int(i) for i in exclude)
    pool = [i for i in range(len(labels)) if i not in excluded]
    if chronological:
        k = min(_round_half_up(train_fraction * len(pool)), max(len(pool) - 1, 0))
        train, holdout = pool[:k], pool[k:]
        mode = "chronological"
    else:
        rng = np.random.default_rng([seed, 1])
        train, holdout = _divide_cells(_cells(years, labels, pool), train_fraction, rng)
        mode = "stratified"
    return SplitPlan(seed=seed, fractions=(0.0, train_fraction), train_set=tuple(train),
                     holdout_set=tuple(holdout), mode=mode, disjoint=bool(excluded))


def protocol_split(examples, param_fraction: float = 0.10, param_train_fraction: float = 0.7,
                   train_fraction: float = 0.8, seed: int = 0, disjoint: bool = False,
                   chronological: bool = False) -> SplitPlan:
    """Both stages in one plan.

    With ``disjoint`` the comparison sets are drawn from the examples left over
    after the parameter subset; otherwise from the whole data set.
    """
    param = stratified_parameter_split(examples, param_fraction, seed, param_train_fraction)
    comp = comparison_split(examples, train_fraction, seed,
                            exclude=param.parameter_set if disjoint else (),
                            chronological=chronological)
    if len(comp.train_set) <= len(param.param_train):
        raise ParameterError(
            f"comparison train set ({len(comp.train_set)}) must be larger than the "
            f"parameter-stage train subset ({len(param.param_train)})")
    return replace(param, fractions=(param_fraction, train_fraction), train_set=comp.train_set,
                   holdout_set=comp.holdout_set, mode=comp.mode, disjoint=disjoint)


# -- normalisation ----------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    location: np.ndarray
    scale: np.ndarray
    method: str = "minmax"
    columns: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {"method": self.method, "location": [float(v) for v in self.location],
                "scale": [float(v) for v in self.scale], "columns": list(self.columns)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["location"], dtype=np.float64), np.array(d["scale"], dtype=np.float64),
                   d["method"], tuple(d.get("columns", ())))

    @classmethod
    def identity(cls, n_features: int) -> "NormStats":
        return cls(np.zeros(n_features), np.ones(n_features), "identity")


def fit_normalizer(features: np.ndarray | Dataset, indices: Sequence[int],
                   method: str = "minmax") -> NormStats:
    """Per-column location/scale from the ``indices`` rows only."""
    columns: tuple[str, ...] = ()
    if isinstance(features, Dataset):
        columns = features.columns
        features = features.features
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ParameterError("fit_normalizer needs at least one training row")
    train = np.asarray(features, dtype=np.float64)[indices]
    if method == "minmax":
        location = train.min(axis=0)
        scale = train.max(axis=0) - location
    elif method == "zscore":
        location = train.mean(axis=0)
        scale = train.std(axis=0)
    else:
        raise ParameterError(f"unknown normalisation method {method!r}")
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        name = columns[bad[0]] if columns else f"column {bad[0]}"
        raise DegenerateFeatureError(f"feature {name} is constant on the training rows")
    return NormStats(location, scale, method, columns)


def apply_normalizer(stats: NormStats, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != len(stats.location):
        raise ShapeError(f"expected {len(stats.location)} columns, got {features.shape[-1]}")
    return (features - stats.location) / stats.scale


def invert_normalizer(stats: NormStats, normalized: np.ndarray) -> np.ndarray:
    normalized = np.asarray(normalized, dtype=np.float64)
    if normalized.shape[-1] != len(stats.location):
        raise ShapeError(f"expected {len(stats.location)} columns, got {normalized.shape[-1]}")
    return normalized * stats.scale + stats.location
