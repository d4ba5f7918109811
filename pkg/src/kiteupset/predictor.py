"""Predictors consumed by the closed loop at the guidance rate.

Both are plain callables over the history of measured rows (latest last) and return
1 (nominal) or -1 (upset ahead).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .features import DEFAULT_TAUS, extract_features
from .svm import SvmModel, svm_predict


def threshold_predict(value: float, q_star: float) -> int:
    return -1 if value >= q_star else 1


@dataclass(frozen=True)
class ThresholdPredictor:
    q_star: float
    signal: str = "F_t"
    name: str = "threshold"

    def __call__(self, history: Sequence[Dict[str, float]]) -> int:
        if not history:
            return 1
        return threshold_predict(history[-1][self.signal], self.q_star)


@dataclass(frozen=True, eq=False)
class OnlineSvmPredictor:
    model: SvmModel
    signals: Tuple[str, ...]
    window_samples: int
    f_s: float
    taus: Tuple[float, ...] = DEFAULT_TAUS
    name: str = "svm"

    def decision(self, history: Sequence[Dict[str, float]]) -> float:
        rows = history[-self.window_samples :]
        window = {s: np.array([row[s] for row in rows], dtype=float) for s in self.signals}
        f, _ = svm_predict(self.model, extract_features(window, self.signals, self.f_s, self.taus))
        return f

    def __call__(self, history: Sequence[Dict[str, float]]) -> int:
        if len(history) < self.window_samples:
            return 1
        return 1 if self.decision(history) >= 0.0 else -1


def threshold_family(
    force_set: float,
    percents: Sequence[float],
    nominal_max: Sequence[float] = (),
    quantile: float = 0.99,
) -> List[ThresholdPredictor]:
    """`thr+k%` predictors at force_set * (1 + k/100), plus `thr-q99` from nominal maxima."""
    family = [ThresholdPredictor(force_set * (1.0 + p / 100.0), name=f"thr+{p:g}%") for p in percents]
    values = np.asarray(nominal_max, dtype=float)
    values = values[np.isfinite(values)]
    if values.size:
        q = float(np.quantile(values, quantile))
        family.append(ThresholdPredictor(q, name=f"thr-q{int(round(quantile * 100))}"))
    return family


def never_predictor() -> ThresholdPredictor:
    return ThresholdPredictor(math.inf, name="none")
