"""Poisson false-positive/false-negative loss model and predictor ranking.

Times are in minutes, powers in kW, energies in kWh. The loss rate is reported
normalized by the energy of one pumping cycle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import require

LOGGER = logging.getLogger(__name__)

MINUTES_PER_HOUR = 60.0
ONE_WEEK_MIN = 7 * 24 * 60.0


def minutes_to_hours(minutes: float) -> float:
    return minutes / MINUTES_PER_HOUR


def hours_to_minutes(hours: float) -> float:
    return hours * MINUTES_PER_HOUR


def kw_min_to_kwh(kw_min: float) -> float:
    return kw_min / MINUTES_PER_HOUR


def kwh_to_kw_min(kwh: float) -> float:
    return kwh * MINUTES_PER_HOUR


@dataclass(frozen=True)
class LossModelParams:
    p_f: float = 2e-7
    # Pr(y_hat = 1 | y = -1)
    fn_conditional: float = 1.0
    # Pr(y_hat = -1, y = 1) per cycle
    fp_probability: float = 0.0
    p_em: float = 0.4
    p_pc: float = 3.9
    t_pc: float = 2.5
    downtime: float = ONE_WEEK_MIN
    e_misc: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_f", "fn_conditional", "fp_probability"):
            value = getattr(self, name)
            require(math.isfinite(value) and 0.0 <= value <= 1.0, name, "must be a probability in [0, 1]")
        for name in ("p_em", "downtime", "e_misc"):
            value = getattr(self, name)
            require(math.isfinite(value) and value >= 0.0, name, "must be finite and >= 0")
        require(math.isfinite(self.p_pc) and self.p_pc > 0.0, "p_pc", "must be > 0")
        require(math.isfinite(self.t_pc) and self.t_pc > 0.0, "t_pc", "must be > 0")

    @property
    def lambda_fn(self) -> float:
        return self.fn_conditional * self.p_f

    @property
    def lambda_fp(self) -> float:
        return self.fp_probability

    @property
    def e_pc(self) -> float:
        return kw_min_to_kwh(self.p_pc * self.t_pc)


def fn_rate(n_fn: int, n_tp: int, p_f: float) -> float:
    if n_fn < 0 or n_tp < 0:
        raise ValueError("counts must be non-negative")
    if n_fn + n_tp == 0:
        raise ValueError("no upset replays: cannot estimate the false-negative rate")
    return n_fn / (n_fn + n_tp) * p_f


def fp_prob_from_cdf(cdf_at_q: float, p_f: float) -> float:
    return max(0.0, 1.0 - cdf_at_q - p_f)


def fp_prob_threshold(nominal_max: Sequence[float], q_star: float, p_f: float) -> float:
    """False-trigger probability of a fixed threshold from per-run maxima of nominal runs."""
    values = np.asarray(nominal_max, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise ValueError("empty nominal sample")
    if values.size < 1000:
        LOGGER.warning("empirical CDF from only %d nominal runs", values.size)
    if q_star < float(np.median(values)):
        LOGGER.warning("threshold %.4g lies below the median nominal maximum %.4g", q_star, float(np.median(values)))
    # the predictor fires at g >= q*, so a run is clean only when its maximum stays below q*
    cdf = float(np.mean(values < q_star))
    return fp_prob_from_cdf(cdf, p_f)


def fp_prob_counts(n_false_triggers: int, n_runs: int) -> float:
    if n_runs <= 0:
        raise ValueError("no nominal replays")
    return n_false_triggers / n_runs


def loss_breakdown(params: LossModelParams) -> Dict[str, float]:
    e_fp_rel = params.p_em / params.p_pc
    n_mpc = params.downtime / params.t_pc
    e_misc_rel = params.e_misc / params.e_pc
    out = {
        "lambda_fn": params.lambda_fn,
        "lambda_fp": params.lambda_fp,
        "n_mpc": n_mpc,
        "e_fp_rel": e_fp_rel,
        "e_fn_rel": n_mpc + e_misc_rel,
    }
    if params.lambda_fn == 0.0:
        out.update({"n_pc": math.inf, "n_fp": math.inf, "loss_rate": params.lambda_fp * e_fp_rel})
        return out
    n_pc = 1.0 / params.lambda_fn
    n_fp = params.lambda_fp * n_pc
    out.update(
        {
            "n_pc": n_pc,
            "n_fp": n_fp,
            "loss_rate": (n_fp * e_fp_rel + n_mpc + e_misc_rel) / (n_pc + n_mpc),
        }
    )
    return out


def loss_rate(params: LossModelParams) -> float:
    """Expected loss per cycle over the cycle energy; the no-miss limit is lambda_FP * P_em / P_pc."""
    value = loss_breakdown(params)["loss_rate"]
    if not math.isfinite(value):
        raise ValueError(f"loss rate is not finite for {params}")
    return value


def rank_predictors(
    entries: Sequence[Tuple[str, LossModelParams]],
    downtimes: Sequence[float],
) -> List[Dict[str, object]]:
    """Rows (downtime, rank, name, loss rate, breakdown); ties keep name order."""
    rows: List[Dict[str, object]] = []
    for downtime in downtimes:
        scored = []
        for name, params in entries:
            p = replace(params, downtime=float(downtime))
            b = loss_breakdown(p)
            scored.append((b["loss_rate"], name, b))
        scored.sort(key=lambda item: (item[0], item[1]))
        for rank, (value, name, b) in enumerate(scored, start=1):
            rows.append(
                {
                    "downtime_min": float(downtime),
                    "rank": rank,
                    "name": name,
                    "loss_rate": value,
                    "lambda_fn": b["lambda_fn"],
                    "lambda_fp": b["lambda_fp"],
                    "n_pc": b["n_pc"],
                    "n_fp": b["n_fp"],
                    "n_mpc": b["n_mpc"],
                    "e_fp_rel": b["e_fp_rel"],
                    "e_fn_rel": b["e_fn_rel"],
                }
            )
    return rows


def params_to_dict(params: LossModelParams) -> Dict[str, float]:
    return asdict(params)
