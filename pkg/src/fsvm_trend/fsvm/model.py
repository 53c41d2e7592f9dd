from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..dataset import NormStats
from ..errors import ClassError, DegenerateBoxError, ParameterError, ShapeError
from .kernels import KernelSpec, kernel_matrix
from .membership import MembershipSpec, memberships as compute_memberships
from .smo import DENSE_CACHE_LIMIT, solve

MODEL_FORMAT = "fsvm-trend-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    membership: MembershipSpec = field(default_factory=MembershipSpec)
    tolerance: float = 1e-3
    max_passes: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ParameterError(f"C must be positive, got {self.C}")
        if not self.tolerance > 0:
            raise ParameterError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_passes < 1:
            raise ParameterError("max_passes must be >= 1")

    @property
    def gamma(self) -> float:
        """Grid tie-break key; 0 for kernels without a width."""
        return self.kernel.gamma if self.kernel.kind == "rbf" else 0.0

    def label(self) -> str:
        parts = [f"C={self.C:g}", self.kernel.kind]
        if self.kernel.kind == "rbf":
            parts.append(f"gamma={self.kernel.gamma:g}")
        parts.append(f"{self.membership.kind}(floor={self.membership.floor:g})")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {"C": self.C, "kernel": self.kernel.to_dict(),
                "membership": self.membership.to_dict(), "tolerance": self.tolerance,
                "max_passes": self.max_passes, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(C=float(d["C"]), kernel=KernelSpec.from_dict(d["kernel"]),
                   membership=MembershipSpec.from_dict(d["membership"]),
                   tolerance=float(d.get("tolerance", 1e-3)),
                   max_passes=int(d.get("max_passes", 1000)), seed=int(d.get("seed", 0)))


def fsvm_preset(C: float = 1.0, floor: float = 0.5, **kw) -> TrainConfig:
    """Baseline fuzzy SVM: linear kernel, distance-to-class-centre membership."""
    return TrainConfig(C=C, kernel=KernelSpec("linear"),
                       membership=MembershipSpec("class_center", floor), **kw)


def nafsvm_preset(C: float = 1.0, gamma: float = 0.1, floor: float = 0.5, **kw) -> TrainConfig:
    """RBF kernel with a linear time-decay membership (older rows weigh less)."""
    return TrainConfig(C=C, kernel=KernelSpec("rbf", gamma),
                       membership=MembershipSpec("time_decay", floor), **kw)


PRESETS = {"fsvm": fsvm_preset, "nafsvm": nafsvm_preset}


@dataclass(frozen=True)
class TrainDiagnostics:
    iterations: int
    max_kkt_violation: float
    dual_objective: float
    converged: bool = True
    skipped_pairs: int = 0

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "max_kkt_violation": self.max_kkt_violation,
                "dual_objective": self.dual_objective, "converged": self.converged,
                "skipped_pairs": self.skipped_pairs}


@dataclass(frozen=True)
class FsvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    memberships: np.ndarray
    bias: float
    kernel: KernelSpec
    norm_stats: NormStats | None
    C: float
    support_index: np.ndarray
    diagnostics: TrainDiagnostics
    n_train: int = 0
    trace: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "bias": self.bias,
            "norm_stats": None if self.norm_stats is None else self.norm_stats.to_dict(),
            "support_vectors": self.support_vectors.tolist(),
            "alphas": self.alphas.tolist(),
            "labels": self.labels.astype(int).tolist(),
            "memberships": self.memberships.tolist(),
            "support_index": self.support_index.astype(int).tolist(),
            "n_train": self.n_train,
            "train_diagnostics": self.diagnostics.to_dict(),
        }

    def to_json(self) -> str:
        # json writes floats via repr: shortest string that round-trips exactly
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FsvmModel":
        if d.get("format") != MODEL_FORMAT:
            raise ParameterError("not an fsvm-trend model document")
        if d.get("version") != MODEL_VERSION:
            raise ParameterError(f"unsupported model version {d.get('version')}")
        nf = len(d["norm_stats"]["location"]) if d.get("norm_stats") else 0
        sv = np.array(d["support_vectors"], dtype=np.float64).reshape(len(d["alphas"]), -1)
        if sv.size == 0 and nf:
            sv = sv.reshape(0, nf)
        return cls(
            support_vectors=sv,
            alphas=np.array(d["alphas"], dtype=np.float64),
            labels=np.array(d["labels"], dtype=np.int64),
            memberships=np.array(d["memberships"], dtype=np.float64),
            bias=float(d["bias"]),
            kernel=KernelSpec.from_dict(d["kernel"]),
            norm_stats=None if d.get("norm_stats") is None else NormStats.from_dict(d["norm_stats"]),
            C=float(d["C"]),
            support_index=np.array(d["support_index"], dtype=np.int64),
            diagnostics=TrainDiagnostics(**d["train_diagnostics"]),
            n_train=int(d.get("n_train", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "FsvmModel":
        return cls.from_dict(json.loads(text))


def _check_training(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"features {X.shape} and labels {y.shape} do not align")
    if not np.isin(y, (1, -1)).all():
        raise ParameterError("labels must be +1 or -1")
    if not ((y == 1).any() and (y == -1).any()):
        raise ClassError("training data needs at least one example of each class")
    return X, y.astype(np.int64)


def train_fsvm(features, labels, config: TrainConfig, norm_stats: NormStats | None = None,
               memberships=None, record_trace: bool = False,
               cache_limit: int = DENSE_CACHE_LIMIT) -> FsvmModel:
    """Fit the weighted soft-margin dual by SMO.

    ``features`` must already be normalised; ``norm_stats`` is only stored on
    the model. Rows are taken to be in chronological order (time-decay
    membership ramps up along the row index). ``memberships`` overrides the
    scheme in ``config``.
    """
    X, y = _check_training(features, labels)
    if memberships is None:
        s = compute_memberships(config.membership, X, y)
    else:
        s = np.asarray(memberships, dtype=np.float64)
        if s.shape != y.shape:
            raise ShapeError("one membership per training row is required")
    if not (s > np.finfo(np.float64).eps).any():
        raise DegenerateBoxError("every membership is below machine epsilon")
    upper = s * config.C
    kernel = config.kernel
    res = solve(X, y, upper, kind=kernel.kind, gamma=kernel.gamma, tol=config.tolerance,
                max_iter=config.max_passes * len(y), seed=config.seed,
                record_trace=record_trace, cache_limit=cache_limit)
    sv = np.flatnonzero(res.alpha > 0)
    model = FsvmModel(
        support_vectors=X[sv].copy(), alphas=res.alpha[sv].copy(), labels=y[sv].copy(),
        memberships=s[sv].copy(), bias=res.bias, kernel=kernel, norm_stats=norm_stats,
        C=config.C, support_index=sv,
        diagnostics=TrainDiagnostics(res.iterations, math.nan, res.objective, res.converged,
                                     res.skipped_pairs),
        n_train=len(y), trace=tuple(res.trace))
    viol = kkt_max_violation(model, X, y, s, config.C)
    return replace(model, diagnostics=replace(model.diagnostics, max_kkt_violation=viol))


def decision_values(model: FsvmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ShapeError(f"expected {model.n_features} features, got {X.shape[1]}")
    if len(model.alphas) == 0:
        return np.full(len(X), model.bias)
    K = kernel_matrix(model.kernel, X, model.support_vectors)
    return K @ (model.alphas * model.labels) + model.bias


def decision_value(model: FsvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("decision_value takes a single feature vector")
    return float(decision_values(model, x[None, :])[0])


def sigmoid(f):
    f = np.asarray(f, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(f)
    pos = f >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-f[pos]))
    e = np.exp(f[~pos])
    out[~pos] = e / (1.0 + e)
    return out


THRESHOLD = 0.5


def predict_proba_up(model: FsvmModel, X) -> np.ndarray:
    return sigmoid(decision_values(model, X))


def predict_directions(model: FsvmModel, X) -> tuple[np.ndarray, np.ndarray]:
    """(direction, confidence) arrays; up when confidence >= 0.5."""
    conf = predict_proba_up(model, X)
    return np.where(conf >= THRESHOLD, 1, -1).astype(np.int64), conf


def predict_direction(model: FsvmModel, x) -> tuple[int, float]:
    conf = float(sigmoid(np.array([decision_value(model, x)]))[0])
    return (1 if conf >= THRESHOLD else -1), conf


def kkt_max_violation(model: FsvmModel, features, labels, memberships, C: float) -> float:
    """Largest KKT residual over the training set, in margin units.

    At ``a_i = 0`` the residual is ``max(0, 1 - y f)``, at ``a_i = s_i C`` it is
    ``max(0, y f - 1)`` and for free ``a_i`` it is ``|y f - 1|``.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    upper = np.asarray(memberships, dtype=np.float64) * C
    alpha = np.zeros(len(y))
    alpha[model.support_index] = model.alphas
    margin = y * decision_values(model, X)
    at_zero = alpha <= 0
    at_upper = alpha >= upper
    res = np.where(at_zero, np.maximum(0.0, 1.0 - margin),
                   np.where(at_upper, np.maximum(0.0, margin - 1.0), np.abs(margin - 1.0)))
    return float(res.max()) if len(res) else 0.0
