from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

# an upset (label -1) is the positive class throughout
POSITIVE = -1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, y_true: np.ndarray, y_pred: np.ndarray) -> "ConfusionCounts":
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        if y_true.shape != y_pred.shape:
            raise ValueError(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
        pos_true = y_true == POSITIVE
        pos_pred = y_pred == POSITIVE
        return cls(
            tp=int(np.count_nonzero(pos_true & pos_pred)),
            tn=int(np.count_nonzero(~pos_true & ~pos_pred)),
            fp=int(np.count_nonzero(~pos_true & pos_pred)),
            fn=int(np.count_nonzero(pos_true & ~pos_pred)),
        )

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> Dict[str, int]:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def mcc(counts: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(den)


def mcc_from_labels(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return mcc(ConfusionCounts.from_labels(y_true, y_pred))
