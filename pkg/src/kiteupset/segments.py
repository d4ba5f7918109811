from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .closedloop import INVALID, PREDICTOR_SIGNALS, LimitFunction, RunLog, first_upset_index
from .errors import require

LOGGER = logging.getLogger(__name__)

UPSET = -1
NOMINAL = 1


@dataclass(frozen=True)
class SegmentationConfig:
    window: float = 5.0
    stride: float = 0.5
    reaction_shift: float = 0.2
    signals: Tuple[str, ...] = PREDICTOR_SIGNALS
    f_s: float = 10.0

    def __post_init__(self) -> None:
        require(self.window > 0.0, "window", "must be > 0")
        require(0.0 < self.stride <= self.window, "stride", "must be in (0, window]")
        require(self.reaction_shift >= 0.0, "reaction_shift", "must be >= 0")
        require(len(self.signals) > 0, "signals", "must name at least one signal")
        require(self.f_s > 0.0, "f_s", "must be > 0")
        for name, value in (("window", self.window), ("stride", self.stride), ("reaction_shift", self.reaction_shift)):
            n = value * self.f_s
            require(abs(n - round(n)) < 1e-9, name, "must be a multiple of the sample period")

    @property
    def window_samples(self) -> int:
        return int(round(self.window * self.f_s))

    @property
    def stride_samples(self) -> int:
        return int(round(self.stride * self.f_s))

    @property
    def shift_samples(self) -> int:
        return int(round(self.reaction_shift * self.f_s))


@dataclass(frozen=True, eq=False)
class SignalSegment:
    signals: Dict[str, np.ndarray]
    label: int
    run_id: str
    end_time: float
    f_s: float = 10.0

    @property
    def start_time(self) -> float:
        n = len(next(iter(self.signals.values())))
        return self.end_time - (n - 1) / self.f_s


def _window(log: RunLog, names: Tuple[str, ...], end: int, n: int) -> Dict[str, np.ndarray]:
    return {name: log.signals[name][end - n + 1 : end + 1].copy() for name in names}


def segment_and_label(
    log: RunLog,
    cfg: SegmentationConfig,
    lf: LimitFunction,
    run_id: Optional[str] = None,
) -> List[SignalSegment]:
    """Windows walking back from the run end, or from just before the first upset.

    A window spans `window_samples` samples ending at its end index. For an upset run the
    first window ends `reaction_shift` before the first sample with g >= g* and is the
    only one labeled -1.
    """
    run_id = run_id if run_id is not None else str(log.meta.get("theta_key", ""))
    missing = [s for s in cfg.signals if s not in log.signals]
    if missing:
        raise KeyError(f"run log {run_id} lacks signals {missing}")
    n = cfg.window_samples
    upset = first_upset_index(log, lf)
    if upset is None:
        end = len(log) - 1
        label = NOMINAL
    else:
        end = upset - cfg.shift_samples
        label = UPSET
    if end - n + 1 < 0:
        if upset is not None:
            LOGGER.warning(
                "run %s: upset at t=%.1f s leaves no room for a %.1f s window; no upset segment",
                run_id,
                float(log.times[upset]),
                cfg.window,
            )
        return []
    segments: List[SignalSegment] = []
    while end - n + 1 >= 0:
        segments.append(SignalSegment(_window(log, cfg.signals, end, n), label, run_id, float(log.times[end]), cfg.f_s))
        label = NOMINAL
        end -= cfg.stride_samples
    return segments


def usable_for_training(log: RunLog) -> bool:
    return log.outcome != INVALID and len(log) > 0
