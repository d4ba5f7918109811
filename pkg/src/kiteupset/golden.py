"""Regression values of the zero-turbulence pumping cycle.

`scripts/freeze_golden.py` writes them under tests/fixtures/golden; the slow
closed-loop tests compare a fresh run against the frozen files.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Dict

import numpy as np

from .closedloop import average_cycle_power, run_pumping_cycle
from .config import CampaignConfig
from .io import read_json, write_json
from .predictor import ThresholdPredictor
from .windfield import NoiseSeedVector

CALM_FILE = "calm_cycle.json"
AVOIDANCE_FILE = "avoidance_cycle.json"
DEFAULT_AVOID_PERCENT = -5.0


def calm_cycle_values(cfg: CampaignConfig) -> Dict[str, Any]:
    log = run_pumping_cycle(NoiseSeedVector.zeros(cfg.simulation.t_sim, cfg.simulation.f_s), cfg)
    power = average_cycle_power(log)
    return {
        "config_hash": cfg.hash,
        "outcome": log.outcome,
        "samples": len(log),
        "max_F_t": float(np.max(log.signals["F_t"])),
        "power_kw": power if math.isfinite(power) else None,
        "events": [ev.kind for ev in log.events],
    }


def avoidance_cycle_values(cfg: CampaignConfig, avoid_percent: float = DEFAULT_AVOID_PERCENT) -> Dict[str, Any]:
    """Calm cycle with a threshold predictor below the traction set point, so avoidance fires."""
    q_star = cfg.guidance.force_traction * (1.0 + avoid_percent / 100.0)
    log = run_pumping_cycle(
        NoiseSeedVector.zeros(cfg.simulation.t_sim, cfg.simulation.f_s),
        cfg,
        predictor=ThresholdPredictor(q_star, name="golden"),
    )
    trigger = log.first_event("avoidance_trigger")
    return {
        "config_hash": cfg.hash,
        "q_star": q_star,
        "outcome": log.outcome,
        "samples": len(log),
        "trigger_t": None if trigger is None else trigger.t,
        "min_F_t_set": float(np.min(log.signals["F_t_set"])),
        "events": [ev.kind for ev in log.events],
    }


def freeze(cfg: CampaignConfig, out: str | Path, avoid_percent: float = DEFAULT_AVOID_PERCENT) -> Dict[str, Path]:
    out = Path(out)
    paths = {"calm": out / CALM_FILE, "avoidance": out / AVOIDANCE_FILE}
    write_json(paths["calm"], calm_cycle_values(cfg))
    write_json(paths["avoidance"], avoidance_cycle_values(cfg, avoid_percent))
    return paths


def load_or_freeze(cfg: CampaignConfig, out: str | Path, name: str) -> tuple[Dict[str, Any], bool]:
    """Frozen values of `name`; computes and writes them first when the file is missing.

    Returns (values, created).
    """
    path = Path(out) / name
    if path.exists():
        return read_json(path), False
    if name == CALM_FILE:
        values = calm_cycle_values(cfg)
    elif name == AVOIDANCE_FILE:
        values = avoidance_cycle_values(cfg)
    else:
        raise ValueError(f"unknown golden file {name!r}")
    write_json(path, values)
    return values, True
