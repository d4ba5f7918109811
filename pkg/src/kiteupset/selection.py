from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import StratifiedKFold
from tqdm import tqdm

from .errors import NumericalFailure, require
from .scoring import ConfusionCounts, mcc
from .svm import kernel_matrix, smo_solve, standardization

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelectionConfig:
    folds: int = 10
    c_grid: Tuple[float, ...] = (1.0, 10.0, 100.0)
    sigma2_scale_grid: Tuple[float, ...] = (0.5, 1.0, 2.0)
    min_rel_improvement: float = 1e-4
    max_features: Optional[int] = None
    tolerance: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        require(self.folds >= 2, "folds", "must be >= 2")
        require(len(self.c_grid) > 0 and all(c > 0 for c in self.c_grid), "c_grid", "needs positive values")
        require(
            len(self.sigma2_scale_grid) > 0 and all(s > 0 for s in self.sigma2_scale_grid),
            "sigma2_scale_grid",
            "needs positive values",
        )
        require(self.min_rel_improvement >= 0.0, "min_rel_improvement", "must be >= 0")
        require(self.max_features is None or self.max_features >= 1, "max_features", "must be >= 1")
        require(self.tolerance > 0.0, "tolerance", "must be > 0")


@dataclass
class SelectionResult:
    selected: List[int]
    names: List[str]
    trace: List[float]
    sigma2_scale: float
    c: float
    rounds: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def sigma2(self) -> float:
        return self.sigma2_scale * len(self.selected)

    @property
    def mcc(self) -> float:
        return self.trace[-1] if self.trace else 0.0


class _Folds:
    """Per-fold standardized copies of the full matrix, computed once."""

    def __init__(self, x: np.ndarray, y: np.ndarray, folds: int, seed: int) -> None:
        skf = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        self.y = y
        self.splits: List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        for train, test in skf.split(x, y):
            mean, scale = standardization(x[train])
            self.splits.append((train, test, (x[train] - mean) / scale, (x[test] - mean) / scale))

    def score(self, cols: Sequence[int], sigma2: float, c: float, tol: float) -> float:
        cols = list(cols)
        values = []
        for train, test, z_train, z_test in self.splits:
            y_train = self.y[train]
            a = z_train[:, cols]
            sol = smo_solve(kernel_matrix(a, a, sigma2), y_train, c, tol)
            sv = sol.alpha > 0.0
            f = kernel_matrix(z_test[:, cols], a[sv], sigma2) @ (sol.alpha[sv] * y_train[sv]) + sol.bias
            y_hat = np.where(f >= 0.0, 1, -1)
            values.append(mcc(ConfusionCounts.from_labels(self.y[test], y_hat)))
        return float(np.mean(values))


def _improves(new: float, old: Optional[float], min_rel: float) -> bool:
    if old is None:
        return True
    return new - old > min_rel * max(abs(old), 1e-12)


def greedy_forward_select(
    x: np.ndarray,
    y: np.ndarray,
    names: Sequence[str],
    cfg: SelectionConfig = SelectionConfig(),
    candidates: Optional[Sequence[int]] = None,
    progress: bool = False,
) -> SelectionResult:
    """Add, one per round, the feature with the best mean CV MCC; stop when it stops paying."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    counts = {label: int(np.count_nonzero(y == label)) for label in (-1, 1)}
    if min(counts.values()) == 0:
        raise ValueError("feature selection needs both classes")
    if min(counts.values()) < cfg.folds:
        raise ValueError(f"each class needs at least {cfg.folds} samples for {cfg.folds}-fold CV, got {counts}")
    folds = _Folds(x, y, cfg.folds, cfg.seed)
    pool = list(candidates) if candidates is not None else list(range(x.shape[1]))
    limit = cfg.max_features if cfg.max_features is not None else len(pool)

    selected: List[int] = []
    trace: List[float] = []
    rounds: List[Dict[str, Any]] = []
    scale, c = cfg.sigma2_scale_grid[len(cfg.sigma2_scale_grid) // 2], cfg.c_grid[len(cfg.c_grid) // 2]
    best_prev: Optional[float] = None

    while pool and len(selected) < limit:
        size = len(selected) + 1
        best_feat, best_score = -1, -np.inf
        for feat in tqdm(pool, desc=f"round {size}", disable=not progress):
            try:
                score = folds.score(selected + [feat], scale * size, c, cfg.tolerance)
            except NumericalFailure as e:
                LOGGER.warning("candidate %s skipped: %s", names[feat], e)
                continue
            if score > best_score:
                best_feat, best_score = feat, score
        if best_feat < 0:
            break
        cols = selected + [best_feat]
        tuned_scale, tuned_c, tuned = scale, c, best_score
        for s in cfg.sigma2_scale_grid:
            for cc in cfg.c_grid:
                if (s, cc) == (scale, c):
                    continue
                try:
                    score = folds.score(cols, s * size, cc, cfg.tolerance)
                except NumericalFailure:
                    continue
                if score > tuned:
                    tuned_scale, tuned_c, tuned = s, cc, score
        rounds.append(
            {"round": size, "feature": names[best_feat], "mcc": tuned, "sigma2_scale": tuned_scale, "c": tuned_c}
        )
        if not _improves(tuned, best_prev, cfg.min_rel_improvement):
            LOGGER.info("selection stops: %s adds %.3g over %.6f", names[best_feat], tuned - best_prev, best_prev)
            break
        selected.append(best_feat)
        pool.remove(best_feat)
        trace.append(tuned)
        scale, c, best_prev = tuned_scale, tuned_c, tuned
        LOGGER.info("selected %s (MCC %.4f, sigma2 scale %g, C %g)", names[best_feat], tuned, scale, c)

    return SelectionResult(selected, [names[i] for i in selected], trace, scale, c, rounds)
