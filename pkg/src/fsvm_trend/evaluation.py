"""Scoring, the two-stage protocol (parameter search, then comparison) and report I/O."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from itertools import product
from typing import Sequence

import numpy as np

from .dataset import Dataset, SplitPlan, apply_normalizer, fit_normalizer
from .errors import ParameterError, ShapeError
from .fsvm import FsvmModel, TrainConfig, predict_directions, train_fsvm
from .fsvm.model import fsvm_preset, nafsvm_preset

DEFAULT_C = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA = (0.01, 0.1, 1.0, 10.0)
DEFAULT_FLOOR = (0.3, 0.5, 0.7, 1.0)
TOP_K = 4


# -- metrics ----------------------------------------------------------------------

def _aligned(predicted, actual):
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.shape != a.shape or p.ndim != 1:
        raise ShapeError(f"sequences must be equal-length vectors, got {p.shape} and {a.shape}")
    if len(p) == 0:
        raise ShapeError("cannot score an empty sequence")
    return p, a


def directional_accuracy(predicted, actual) -> float:
    p, a = _aligned(predicted, actual)
    return float(np.mean(p == a))


def confusion_counts(predicted, actual) -> tuple[int, int, int, int]:
    """(tp, tn, fp, fn) with +1 as the positive class."""
    p, a = _aligned(predicted, actual)
    tp = int(((p == 1) & (a == 1)).sum())
    tn = int(((p == -1) & (a == -1)).sum())
    fp = int(((p == 1) & (a == -1)).sum())
    fn = int(((p == -1) & (a == 1)).sum())
    return tp, tn, fp, fn


def per_year_accuracy(predicted, actual, dates: Sequence[date]) -> dict[int, tuple[float, int]]:
    p, a = _aligned(predicted, actual)
    if len(dates) != len(p):
        raise ShapeError("dates must align with predictions")
    years = np.array([d.year for d in dates])
    out = {}
    for year in np.unique(years):
        rows = years == year
        out[int(year)] = (float(np.mean(p[rows] == a[rows])), int(rows.sum()))
    return out


def best_worst_year(per_year: dict[int, tuple[float, int]]) -> tuple[int | None, int | None]:
    """Highest and lowest accuracy years; ties go to the earlier year."""
    if not per_year:
        return None, None
    ordered = sorted(per_year)
    best = max(ordered, key=lambda y: (per_year[y][0], -y))
    worst = min(ordered, key=lambda y: (per_year[y][0], y))
    return best, worst


def relative_rms(confidences, actual) -> float:
    """RMS of (confidence - target) over RMS of target, targets up=1 / down=0."""
    c = np.asarray(confidences, dtype=np.float64)
    a = np.asarray(actual)
    if c.shape != a.shape or c.ndim != 1 or len(c) == 0:
        raise ShapeError("confidences and actual directions must be equal-length, non-empty")
    if ((c < 0) | (c > 1)).any():
        raise ParameterError("confidences must lie in [0, 1]")
    target = (a == 1).astype(np.float64)
    denom = math.sqrt(float(np.mean(target ** 2)))
    if denom == 0:
        raise ParameterError("relative RMS undefined: no increasing days among the targets")
    return math.sqrt(float(np.mean((c - target) ** 2))) / denom


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_year: dict[int, tuple[float, int]]
    relative_rms: float | None
    confusion: tuple[int, int, int, int]
    split: str
    n: int

    @property
    def best_year(self) -> int | None:
        return best_worst_year(self.per_year)[0]

    @property
    def worst_year(self) -> int | None:
        return best_worst_year(self.per_year)[1]

    def to_dict(self) -> dict:
        tp, tn, fp, fn = self.confusion
        return {
            "split": self.split, "n": self.n, "accuracy": self.accuracy,
            "relative_rms": self.relative_rms,
            "confusion": {"tp": tp, "tn": tn, "fp": fp, "fn": fn},
            "per_year": {str(y): {"accuracy": acc, "n": n} for y, (acc, n) in self.per_year.items()},
            "best_year": self.best_year, "worst_year": self.worst_year,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        c = d["confusion"]
        return cls(accuracy=d["accuracy"],
                   per_year={int(y): (v["accuracy"], v["n"]) for y, v in d["per_year"].items()},
                   relative_rms=d["relative_rms"], confusion=(c["tp"], c["tn"], c["fp"], c["fn"]),
                   split=d["split"], n=d["n"])


def evaluate(predicted, confidences, actual, dates, split: str = "holdout") -> EvalReport:
    p, a = _aligned(predicted, actual)
    try:
        rrms = relative_rms(confidences, a)
    except ParameterError:
        rrms = None
    return EvalReport(accuracy=directional_accuracy(p, a), per_year=per_year_accuracy(p, a, dates),
                      relative_rms=rrms, confusion=confusion_counts(p, a), split=split, n=len(p))


def evaluate_model(model: FsvmModel, data: Dataset, rows: Sequence[int],
                   split: str = "holdout") -> EvalReport:
    rows = np.asarray(rows, dtype=np.int64)
    X = data.features[rows]
    if model.norm_stats is not None:
        X = apply_normalizer(model.norm_stats, X)
    pred, conf = predict_directions(model, X)
    return evaluate(pred, conf, data.labels[rows], [data.dates[i] for i in rows], split)


def fit_on_rows(data: Dataset, rows: Sequence[int], config: TrainConfig,
                norm_method: str = "minmax") -> FsvmModel:
    """Normalise with statistics of ``rows`` only, then train on those rows (in date order)."""
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    stats = fit_normalizer(data, rows, norm_method)
    X = apply_normalizer(stats, data.features[rows])
    return train_fsvm(X, data.labels[rows], config, norm_stats=stats)


# -- grid search --------------------------------------------------------------------

def default_grid(family: str, C=DEFAULT_C, gamma=DEFAULT_GAMMA, floor=DEFAULT_FLOOR,
                 **kw) -> list[TrainConfig]:
    """Every preset configuration on the C x gamma x floor grid (gamma only for rbf)."""
    if family == "fsvm":
        return [fsvm_preset(c, f, **kw) for c, f in product(C, floor)]
    if family == "nafsvm":
        return [nafsvm_preset(c, g, f, **kw) for c, g, f in product(C, gamma, floor)]
    raise ParameterError(f"unknown model family {family!r}")


@dataclass(frozen=True)
class GridRow:
    config: TrainConfig
    train_accuracy: float
    holdout_accuracy: float
    converged: bool = True
    max_kkt_violation: float = 0.0

    @property
    def mean(self) -> float:
        return 0.5 * (self.train_accuracy + self.holdout_accuracy)


@dataclass(frozen=True)
class GridResult:
    rows: tuple[GridRow, ...]
    best: int
    family: str = ""

    @property
    def best_config(self) -> TrainConfig:
        return self.rows[self.best].config

    def ranking(self) -> list[int]:
        return sorted(range(len(self.rows)), key=lambda k: _rank_key(self.rows[k], k))

    def top(self, k: int = TOP_K) -> list[GridRow]:
        return [self.rows[i] for i in self.ranking()[:k]]

    def to_dict(self) -> dict:
        rank = {i: r for r, i in enumerate(self.ranking(), start=1)}
        return {
            "family": self.family, "best": self.best,
            "best_config": self.best_config.to_dict(),
            "rows": [{"rank": rank[i], "config": r.config.to_dict(), "label": r.config.label(),
                      "train_accuracy": r.train_accuracy, "holdout_accuracy": r.holdout_accuracy,
                      "mean": r.mean, "converged": r.converged,
                      "max_kkt_violation": r.max_kkt_violation}
                     for i, r in enumerate(self.rows)],
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["rank", "C", "kernel", "gamma", "membership", "floor", "train_accuracy",
                    "holdout_accuracy", "mean", "converged"])
        for rank, i in enumerate(self.ranking(), start=1):
            r = self.rows[i]
            c = r.config
            w.writerow([rank, repr(c.C), c.kernel.kind,
                        repr(c.gamma), c.membership.kind, repr(c.membership.floor),
                        repr(r.train_accuracy), repr(r.holdout_accuracy), repr(r.mean),
                        int(r.converged)])
        return out.getvalue()


def _rank_key(row: GridRow, index: int):
    # best mean first; ties: smaller C, smaller gamma, then grid order
    return (-row.mean, row.config.C, row.config.gamma, index)


def select_best(rows: Sequence[GridRow]) -> int:
    if not rows:
        raise ParameterError("grid is empty")
    return min(range(len(rows)), key=lambda k: _rank_key(rows[k], k))


def _score_config(args) -> GridRow:
    data, train_rows, hold_rows, config, norm_method = args
    model = fit_on_rows(data, train_rows, config, norm_method)
    tr = evaluate_model(model, data, train_rows, "param_train")
    ho = evaluate_model(model, data, hold_rows, "param_holdout")
    return GridRow(config, tr.accuracy, ho.accuracy, model.diagnostics.converged,
                   model.diagnostics.max_kkt_violation)


def run_parameter_stage(data: Dataset, plan: SplitPlan, grid: Sequence[TrainConfig],
                        jobs: int = 1, norm_method: str = "minmax", family: str = "") -> GridResult:
    """Train every config on the parameter-stage train subset, score both subsets.

    Rows come back in grid order whatever the completion order of workers.
    """
    grid = list(grid)
    if not grid:
        raise ParameterError("grid is empty")
    if not plan.param_train or not plan.param_holdout:
        raise ParameterError("split plan has an empty parameter-stage train or holdout subset")
    tasks = [(data, plan.param_train, plan.param_holdout, cfg, norm_method) for cfg in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_score_config, tasks))
    else:
        rows = [_score_config(t) for t in tasks]
    return GridResult(tuple(rows), select_best(rows), family)


@dataclass(frozen=True)
class ComparisonReport:
    report_a: EvalReport
    report_b: EvalReport
    config_a: TrainConfig
    config_b: TrainConfig
    name_a: str = "fsvm"
    name_b: str = "nafsvm"
    train_a: EvalReport | None = None
    train_b: EvalReport | None = None
    models: tuple[FsvmModel, FsvmModel] | None = field(default=None, compare=False)

    @property
    def difference(self) -> float:
        """Holdout accuracy of B minus A."""
        return self.report_b.accuracy - self.report_a.accuracy

    def to_dict(self) -> dict:
        def side(name, cfg, rep, tr):
            return {"name": name, "config": cfg.to_dict(), "label": cfg.label(),
                    "holdout": rep.to_dict(), "train": None if tr is None else tr.to_dict()}
        return {"a": side(self.name_a, self.config_a, self.report_a, self.train_a),
                "b": side(self.name_b, self.config_b, self.report_b, self.train_b),
                "accuracy_difference": self.difference}

    def per_year_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["year", "n", f"{self.name_a}_accuracy", f"{self.name_b}_accuracy"])
        for year in sorted(set(self.report_a.per_year) | set(self.report_b.per_year)):
            a = self.report_a.per_year.get(year, (math.nan, 0))
            b = self.report_b.per_year.get(year, (math.nan, 0))
            w.writerow([year, max(a[1], b[1]), repr(a[0]), repr(b[0])])
        return out.getvalue()


def compare_models(data: Dataset, plan: SplitPlan, model_a: FsvmModel, model_b: FsvmModel,
                   config_a: TrainConfig, config_b: TrainConfig, name_a: str = "fsvm",
                   name_b: str = "nafsvm") -> ComparisonReport:
    """Score two already-trained models on the comparison train and holdout sets."""
    if not plan.train_set or not plan.holdout_set:
        raise ParameterError("split plan has an empty comparison train or holdout set")
    hold = [evaluate_model(m, data, plan.holdout_set, "holdout") for m in (model_a, model_b)]
    train = [evaluate_model(m, data, plan.train_set, "train") for m in (model_a, model_b)]
    return ComparisonReport(hold[0], hold[1], config_a, config_b, name_a, name_b,
                            train[0], train[1], (model_a, model_b))


def run_comparison_stage(data: Dataset, plan: SplitPlan, config_a: TrainConfig,
                         config_b: TrainConfig, name_a: str = "fsvm", name_b: str = "nafsvm",
                         norm_method: str = "minmax") -> ComparisonReport:
    """Retrain both configs on the comparison train set and score the holdout."""
    if not plan.train_set or not plan.holdout_set:
        raise ParameterError("split plan has an empty comparison train or holdout set")
    model_a = fit_on_rows(data, plan.train_set, config_a, norm_method)
    model_b = fit_on_rows(data, plan.train_set, config_b, norm_method)
    return compare_models(data, plan, model_a, model_b, config_a, config_b, name_a, name_b)


# -- report files ----------------------------------------------------------------

def per_year_gnuplot(report: EvalReport, title: str = "") -> str:
    """Two whitespace-separated columns: year, accuracy in percent."""
    lines = [f"# {title}".rstrip(), "# year accuracy_percent"]
    for year, (acc, _) in sorted(report.per_year.items()):
        lines.append(f"{year} {acc * 100:.6f}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["year", "n", "accuracy"])
    for year, (acc, n) in sorted(report.per_year.items()):
        w.writerow([year, n, repr(acc)])
    w.writerow(["all", report.n, repr(report.accuracy)])
    return out.getvalue()


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def default_jobs() -> int:
    return os.cpu_count() or 1
