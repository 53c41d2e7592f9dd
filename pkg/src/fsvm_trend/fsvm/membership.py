"""Fuzzy membership weights ``s_i`` in ``[floor, 1]``; sample i's box becomes ``[0, s_i C]``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ClassError, ParameterError

CENTER_DELTA = 1e-12


@dataclass(frozen=True)
class MembershipSpec:
    kind: str = "uniform"
    floor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "time_decay", "class_center"):
            raise ParameterError(f"unknown membership scheme {self.kind!r}")
        if not 0 < self.floor <= 1:
            raise ParameterError(f"membership floor must lie in (0, 1], got {self.floor}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "floor": self.floor}

    @classmethod
    def from_dict(cls, d: dict) -> "MembershipSpec":
        return cls(d["kind"], float(d["floor"]))


def membership_time_decay(n: int, floor: float) -> np.ndarray:
    """Linear ramp from ``floor`` (oldest row) to 1 (newest row)."""
    if n < 1:
        raise ParameterError("membership_time_decay needs n >= 1")
    if not 0 < floor <= 1:
        raise ParameterError(f"membership floor must lie in (0, 1], got {floor}")
    if n == 1:
        return np.ones(1)
    # counted back from the newest row so the last weight is exactly 1
    return 1.0 - (1.0 - floor) * np.arange(n - 1, -1, -1, dtype=np.float64) / (n - 1)


def membership_class_center(features, labels, floor: float) -> np.ndarray:
    """Shrink weights with distance from the sample's class mean.

    A point at its class centre gets 1, the farthest point of the class gets
    (almost exactly) ``floor``.
    """
    if not 0 < floor <= 1:
        raise ParameterError(f"membership floor must lie in (0, 1], got {floor}")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ClassError("class_center membership needs both classes present")
    s = np.empty(len(y), dtype=np.float64)
    for c in classes:
        rows = y == c
        dist = np.linalg.norm(X[rows] - X[rows].mean(axis=0), axis=1)
        s[rows] = 1.0 - (1.0 - floor) * dist / (dist.max() + CENTER_DELTA)
    return s


def memberships(spec: MembershipSpec, features, labels) -> np.ndarray:
    n = len(labels)
    if spec.kind == "uniform":
        return np.ones(n)
    if spec.kind == "time_decay":
        return membership_time_decay(n, spec.floor)
    return membership_class_center(features, labels, spec.floor)
