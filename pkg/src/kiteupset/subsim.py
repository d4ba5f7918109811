"""Subset simulation over a standard-normal input space.

The engine knows nothing about kites: `simulate` maps a sample vector to either a
float or an `Evaluation`, and the failure domain is `g >= g_star`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DegenerateLevelError, require
from .io import read_json, write_json
from .workpool import ordered_map

LOGGER = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "subsim-checkpoint/1"


class Evaluation(NamedTuple):
    g: float
    invalid: bool = False


Simulator = Callable[[np.ndarray], Union[float, Evaluation]]


@dataclass(frozen=True)
class SubsetSimConfig:
    n_samples: int = 1000
    p_s: float = 0.1
    max_levels: int = 12
    scaling_init: float = 0.6
    target_acceptance: float = 0.44
    adaptation_gain: float = 1.0
    penalty: float = 1000.0
    seed: int = 0

    def __post_init__(self) -> None:
        require(0.0 < self.p_s < 1.0, "p_s", "must be in (0, 1)")
        n_c = self.n_samples * self.p_s
        require(abs(n_c - round(n_c)) < 1e-9 and round(n_c) >= 1, "n_samples", "n_samples * p_s must be a positive integer")
        require(self.n_samples >= 10.0 / self.p_s - 1e-9, "n_samples", "must be >= 10 / p_s")
        require(self.max_levels >= 1, "max_levels", "must be >= 1")
        require(1e-3 <= self.scaling_init <= 1.0, "scaling_init", "must be in [1e-3, 1]")
        require(0.0 < self.target_acceptance < 1.0, "target_acceptance", "must be in (0, 1)")
        require(self.adaptation_gain > 0.0, "adaptation_gain", "must be > 0")
        require(self.penalty >= 0.0, "penalty", "must be >= 0")

    @property
    def n_seeds(self) -> int:
        return int(round(self.n_samples * self.p_s))


@dataclass(frozen=True, eq=False)
class LevelRecord:
    level: int
    # None for the direct Monte Carlo level
    threshold: Optional[float]
    thetas: np.ndarray
    g: np.ndarray
    invalid: np.ndarray
    scaling: float
    acceptance: float
    chain_failures: int = 0


@dataclass(frozen=True, eq=False)
class ChainResult:
    thetas: np.ndarray
    g: np.ndarray
    invalid: np.ndarray
    accepted: int
    steps: int
    failures: int


@dataclass(eq=False)
class SubsetSimResult:
    levels: List[LevelRecord]
    g_star: float
    n_samples: int
    p_s: float
    converged: bool
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def thresholds(self) -> List[float]:
        return [lv.threshold for lv in self.levels if lv.threshold is not None]

    @property
    def m_s(self) -> int:
        return len(self.levels)

    @property
    def _last(self) -> LevelRecord:
        return self.levels[-1]

    @property
    def failure_mask(self) -> np.ndarray:
        return self._last.g >= self.g_star

    @property
    def n_f(self) -> int:
        return int(np.count_nonzero(self.failure_mask))

    @property
    def p_f(self) -> float:
        return failure_probability(self.p_s, self.m_s, self.n_f, self.n_samples)

    @property
    def p_f_valid(self) -> float:
        """Estimate counting only failures that came from valid simulator runs."""
        n = int(np.count_nonzero(self.failure_mask & ~self._last.invalid))
        return failure_probability(self.p_s, self.m_s, n, self.n_samples)

    @property
    def invalid_count(self) -> int:
        return int(sum(np.count_nonzero(lv.invalid) for lv in self.levels))

    @property
    def failure_thetas(self) -> np.ndarray:
        return self._last.thetas[self.failure_mask]

    @property
    def failure_g(self) -> np.ndarray:
        return self._last.g[self.failure_mask]

    @property
    def acceptance(self) -> List[float]:
        return [lv.acceptance for lv in self.levels[1:]]


def failure_probability(p_s: float, m_s: int, n_f: int, n_s: int) -> float:
    if m_s < 1 or n_s < 1:
        raise ValueError("need at least one level with at least one sample")
    return p_s ** (m_s - 1) * n_f / n_s


def _as_evaluation(value: Union[float, Evaluation, Any]) -> Evaluation:
    if isinstance(value, Evaluation):
        return value
    if hasattr(value, "g"):
        return Evaluation(float(value.g), bool(getattr(value, "invalid", False)))
    return Evaluation(float(value), False)


@dataclass(frozen=True)
class _Guarded:
    simulate: Simulator
    invalid_value: float

    def __call__(self, theta: np.ndarray) -> Evaluation:
        try:
            ev = _as_evaluation(self.simulate(theta))
        except Exception as e:  # noqa: BLE001
            LOGGER.warning("simulator failed, sample recorded as invalid: %s", e)
            return Evaluation(self.invalid_value, True)
        if not math.isfinite(ev.g):
            return Evaluation(self.invalid_value, True)
        return ev


def level_rng(seed: int, level: int, chain: Optional[int] = None) -> np.random.Generator:
    key = (level,) if chain is None else (level, chain)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def direct_mc_level(
    simulate: Simulator,
    n_s: int,
    dim: int,
    seed: int,
    invalid_value: float = math.inf,
    workers: int = 1,
    progress: bool = False,
) -> LevelRecord:
    """Level 0: `n_s` iid standard-normal draws with their limit values."""
    require(n_s >= 1, "n_samples", "must be >= 1")
    thetas = level_rng(seed, 0).standard_normal((n_s, dim))
    evals = ordered_map(_Guarded(simulate, invalid_value), list(thetas), workers, desc="level 0", progress=progress)
    g = np.array([e.g for e in evals], dtype=float)
    invalid = np.array([e.invalid for e in evals], dtype=bool)
    return LevelRecord(0, None, thetas, g, invalid, scaling=math.nan, acceptance=math.nan)


def intermediate_threshold(g_desc: Sequence[float], n_s: int, p_s: float) -> float:
    """Midpoint of the n_c-th and (n_c+1)-th largest values, n_c = n_s * p_s."""
    g_desc = np.asarray(g_desc, dtype=float)
    n_c = int(round(n_s * p_s))
    if g_desc.size < n_c + 1:
        raise ValueError(f"need at least {n_c + 1} samples, got {g_desc.size}")
    threshold = 0.5 * (g_desc[n_c - 1] + g_desc[n_c])
    if not np.any(g_desc > threshold):
        raise DegenerateLevelError(
            f"no sample strictly above the intermediate threshold {threshold!r} "
            f"(top values tied at {g_desc[0]!r})"
        )
    return float(threshold)


def adaptive_proposal_update(
    acceptance: float,
    scaling: float,
    level: int = 1,
    target: float = 0.44,
    gain: float = 1.0,
) -> float:
    """Steer the coordinate proposal spread toward the target acceptance rate."""
    if not math.isfinite(acceptance):
        return scaling
    step = gain * (acceptance - target) / math.sqrt(max(level, 1))
    return float(min(max(scaling * math.exp(step), 1e-3), 1.0))


def metropolis_chain(
    theta0: np.ndarray,
    eval0: Evaluation,
    steps: int,
    scaling: float,
    threshold: float,
    simulate: Simulator,
    rng: np.random.Generator,
) -> ChainResult:
    """Modified Metropolis chain in {g >= threshold}; the seed is the first state."""
    theta = np.array(theta0, dtype=float)
    current = eval0
    dim = theta.size
    thetas = np.empty((steps + 1, dim))
    g = np.empty(steps + 1)
    invalid = np.zeros(steps + 1, dtype=bool)
    thetas[0], g[0], invalid[0] = theta, current.g, current.invalid
    accepted = 0
    failures = 0
    for k in range(1, steps + 1):
        proposal = theta + scaling * rng.standard_normal(dim)
        ratio = np.exp(-0.5 * (proposal * proposal - theta * theta))
        candidate = np.where(rng.random(dim) < ratio, proposal, theta)
        if np.any(candidate != theta):
            try:
                ev = _as_evaluation(simulate(candidate))
            except Exception as e:  # noqa: BLE001
                LOGGER.warning("simulator failed inside a chain, state repeated: %s", e)
                ev = None
            if ev is None or not math.isfinite(ev.g):
                failures += 1
            elif ev.g >= threshold:
                theta, current = candidate, ev
                accepted += 1
        thetas[k], g[k], invalid[k] = theta, current.g, current.invalid
    return ChainResult(thetas, g, invalid, accepted, steps, failures)


@dataclass(frozen=True)
class _ChainTask:
    simulate: Simulator
    theta0: np.ndarray
    eval0: Evaluation
    steps: int
    scaling: float
    threshold: float
    seed: int
    level: int
    chain: int


def _run_chain(task: _ChainTask) -> ChainResult:
    rng = level_rng(task.seed, task.level, task.chain)
    return metropolis_chain(task.theta0, task.eval0, task.steps, task.scaling, task.threshold, task.simulate, rng)


def chain_lengths(n_s: int, n_seeds: int) -> List[int]:
    base, extra = divmod(n_s, n_seeds)
    return [base + 1 if i < extra else base for i in range(n_seeds)]


def conditional_level(
    previous: LevelRecord,
    threshold: float,
    simulate: Simulator,
    n_s: int,
    scaling: float,
    seed: int,
    workers: int = 1,
    progress: bool = False,
) -> LevelRecord:
    level = previous.level + 1
    order = np.argsort(-previous.g, kind="stable")
    seeds = [int(i) for i in order if previous.g[i] > threshold]
    if not seeds:
        raise DegenerateLevelError(f"level {level}: no seed strictly above {threshold!r}")
    lengths = chain_lengths(n_s, len(seeds))
    tasks = [
        _ChainTask(
            simulate,
            previous.thetas[i],
            Evaluation(float(previous.g[i]), bool(previous.invalid[i])),
            lengths[c] - 1,
            scaling,
            threshold,
            seed,
            level,
            c,
        )
        for c, i in enumerate(seeds)
    ]
    chains = ordered_map(_run_chain, tasks, workers, desc=f"level {level}", progress=progress)
    steps = sum(ch.steps for ch in chains)
    acceptance = sum(ch.accepted for ch in chains) / steps if steps else math.nan
    return LevelRecord(
        level,
        threshold,
        np.concatenate([ch.thetas for ch in chains]),
        np.concatenate([ch.g for ch in chains]),
        np.concatenate([ch.invalid for ch in chains]),
        scaling=scaling,
        acceptance=acceptance,
        chain_failures=sum(ch.failures for ch in chains),
    )


def _fingerprint(cfg: SubsetSimConfig, g_star: float, dim: int, tag: str) -> Dict[str, Any]:
    return {
        "schema": CHECKPOINT_SCHEMA,
        "n_samples": cfg.n_samples,
        "p_s": cfg.p_s,
        "seed": cfg.seed,
        "scaling_init": cfg.scaling_init,
        "target_acceptance": cfg.target_acceptance,
        "adaptation_gain": cfg.adaptation_gain,
        "penalty": cfg.penalty,
        "g_star": g_star,
        "dim": dim,
        "tag": tag,
    }


def save_level(directory: Path, record: LevelRecord) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    np.savez(
        directory / f"level_{record.level:02d}.npz",
        thetas=record.thetas,
        g=record.g,
        invalid=record.invalid,
    )


def _level_summary(record: LevelRecord) -> Dict[str, Any]:
    return {
        "level": record.level,
        "threshold": record.threshold,
        "scaling": None if math.isnan(record.scaling) else record.scaling,
        "acceptance": None if math.isnan(record.acceptance) else record.acceptance,
        "chain_failures": record.chain_failures,
    }


def _write_state(directory: Path, fingerprint: Dict[str, Any], levels: List[LevelRecord]) -> None:
    write_json(directory / "state.json", {"fingerprint": fingerprint, "levels": [_level_summary(lv) for lv in levels]})


def load_checkpoint(directory: Path, fingerprint: Dict[str, Any]) -> List[LevelRecord]:
    state_path = directory / "state.json"
    if not state_path.exists():
        return []
    state = read_json(state_path)
    if state.get("fingerprint") != fingerprint:
        raise ConfigError(f"checkpoint in {directory} was written with different settings; use a fresh directory")
    levels: List[LevelRecord] = []
    for summary in state["levels"]:
        with np.load(directory / f"level_{summary['level']:02d}.npz") as data:
            levels.append(
                LevelRecord(
                    level=int(summary["level"]),
                    threshold=summary["threshold"],
                    thetas=data["thetas"],
                    g=data["g"],
                    invalid=data["invalid"],
                    scaling=math.nan if summary["scaling"] is None else float(summary["scaling"]),
                    acceptance=math.nan if summary["acceptance"] is None else float(summary["acceptance"]),
                    chain_failures=int(summary["chain_failures"]),
                )
            )
    LOGGER.info("resumed %d level(s) from %s", len(levels), directory)
    return levels


def run_subset_simulation(
    simulate: Simulator,
    g_star: float,
    cfg: SubsetSimConfig,
    dim: int,
    checkpoint_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
    progress: bool = False,
    tag: str = "",
) -> SubsetSimResult:
    require(math.isfinite(g_star), "g_star", "must be finite")
    require(dim >= 1, "dim", "must be >= 1")
    invalid_value = g_star + cfg.penalty
    guarded = _Guarded(simulate, invalid_value)
    fingerprint = _fingerprint(cfg, g_star, dim, tag)
    directory = Path(checkpoint_dir) if checkpoint_dir is not None else None

    levels = load_checkpoint(directory, fingerprint) if directory is not None else []
    if not levels:
        levels.append(direct_mc_level(guarded, cfg.n_samples, dim, cfg.seed, invalid_value, workers, progress))
        if directory is not None:
            save_level(directory, levels[0])
            _write_state(directory, fingerprint, levels)

    converged = False
    while True:
        last = levels[-1]
        n_f = int(np.count_nonzero(last.g >= g_star))
        LOGGER.info("level %d: threshold=%s n_f=%d", last.level, last.threshold, n_f)
        if n_f > cfg.n_seeds:
            converged = True
            break
        if len(levels) >= cfg.max_levels:
            LOGGER.warning("subset simulation stopped at max_levels=%d without converging", cfg.max_levels)
            break
        g_desc = np.sort(last.g)[::-1]
        threshold = min(intermediate_threshold(g_desc, cfg.n_samples, cfg.p_s), g_star)
        if last.threshold is not None and threshold <= last.threshold:
            raise DegenerateLevelError(
                f"level {last.level + 1}: threshold {threshold!r} does not exceed {last.threshold!r}"
            )
        if last.level == 0:
            scaling = cfg.scaling_init
        else:
            scaling = adaptive_proposal_update(
                last.acceptance, last.scaling, last.level, cfg.target_acceptance, cfg.adaptation_gain
            )
        # Chains get the raw simulator; a crashed candidate is rejected and counted.
        record = conditional_level(last, threshold, simulate, cfg.n_samples, scaling, cfg.seed, workers, progress)
        levels.append(record)
        if directory is not None:
            save_level(directory, record)
            _write_state(directory, fingerprint, levels)

    return SubsetSimResult(
        levels=levels,
        g_star=g_star,
        n_samples=cfg.n_samples,
        p_s=cfg.p_s,
        converged=converged,
        meta={"seed": cfg.seed, "dim": dim, "tag": tag},
    )


def level_table(result: SubsetSimResult) -> List[Dict[str, Any]]:
    rows = []
    for lv in result.levels:
        row = _level_summary(lv)
        row.update(
            {
                "n_above_g_star": int(np.count_nonzero(lv.g >= result.g_star)),
                "invalid": int(np.count_nonzero(lv.invalid)),
                "g_max": float(np.max(lv.g)),
                "g_median": float(np.median(lv.g)),
            }
        )
        rows.append(row)
    return rows


@dataclass(frozen=True)
class LinearLimit:
    """g(theta) = sum(theta) / sqrt(d); its exceedance of beta has probability Phi(-beta)."""

    dim: int

    def __call__(self, theta: np.ndarray) -> float:
        return float(np.sum(theta)) / math.sqrt(self.dim)


def direct_monte_carlo(simulate: Simulator, n: int, dim: int, g_star: float, seed: int) -> tuple[float, float]:
    """Plain Monte Carlo estimate of P(g >= g_star) and its standard error."""
    level = direct_mc_level(simulate, n, dim, seed)
    p = float(np.mean(level.g >= g_star))
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / n)
