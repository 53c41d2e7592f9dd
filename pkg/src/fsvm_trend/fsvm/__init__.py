"""Fuzzy-membership support vector machine."""

from .kernels import KernelSpec, kernel_eval, kernel_matrix
from .membership import (MembershipSpec, membership_class_center, membership_time_decay,
                         memberships)
from .model import (PRESETS, FsvmModel, TrainConfig, TrainDiagnostics, decision_value,
                    decision_values, fsvm_preset, kkt_max_violation, nafsvm_preset,
                    predict_direction, predict_directions, predict_proba_up, sigmoid,
                    train_fsvm)
from .smo import dual_objective

__all__ = [
    "KernelSpec", "kernel_eval", "kernel_matrix", "MembershipSpec", "membership_class_center",
    "membership_time_decay", "memberships", "PRESETS", "FsvmModel", "TrainConfig",
    "TrainDiagnostics", "decision_value", "decision_values", "fsvm_preset", "kkt_max_violation",
    "nafsvm_preset", "predict_direction", "predict_directions", "predict_proba_up", "sigmoid",
    "train_fsvm", "dual_objective",
]
