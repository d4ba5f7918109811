from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy import linalg
from sklearn.neighbors import NearestNeighbors

from .errors import NumericalFailure
from .features import FeatureMatrix

LOGGER = logging.getLogger(__name__)

REGULARIZATION = 1e-8


def regularized_covariance(x: np.ndarray) -> np.ndarray:
    """Sample covariance plus 1e-8 * trace/dim on the diagonal.

    A cloud of identical points has zero trace; it gets the identity, where every
    metric gives the same neighbours.
    """
    x = np.asarray(x, dtype=float)
    dim = x.shape[1]
    cov = np.atleast_2d(np.cov(x, rowvar=False)) if x.shape[0] > 1 else np.zeros((dim, dim))
    if not np.all(np.isfinite(cov)):
        raise NumericalFailure("minority covariance is not finite")
    trace = float(np.trace(cov))
    if trace == 0.0:
        return np.eye(dim)
    return cov + REGULARIZATION * trace / dim * np.eye(dim)


def _inverse(cov: np.ndarray) -> np.ndarray:
    try:
        factor = linalg.cho_factor(cov)
    except linalg.LinAlgError as e:
        raise NumericalFailure(f"covariance is not positive definite after regularization: {e}") from e
    return linalg.cho_solve(factor, np.eye(cov.shape[0]))


def mahalanobis_neighbors(x: np.ndarray, k: int, cov: Optional[np.ndarray] = None) -> np.ndarray:
    """Indices (n, k) of each row's k nearest other rows under the Mahalanobis metric."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} minority samples, got {n}")
    cov = regularized_covariance(x) if cov is None else np.asarray(cov, dtype=float)
    nn = NearestNeighbors(
        n_neighbors=k + 1,
        algorithm="brute",
        metric="mahalanobis",
        metric_params={"VI": _inverse(cov)},
    ).fit(x)
    _, idx = nn.kneighbors(x)
    out = np.empty((n, k), dtype=int)
    for i in range(n):
        # duplicates can push the row itself out of column 0
        row = [j for j in idx[i] if j != i]
        out[i] = row[:k]
    return out


def smote_oversample(
    minority: np.ndarray,
    k: int,
    n_new: int,
    rng: np.random.Generator,
    cov: Optional[np.ndarray] = None,
) -> np.ndarray:
    minority = np.asarray(minority, dtype=float)
    if n_new <= 0:
        return np.zeros((0, minority.shape[1]))
    neighbors = mahalanobis_neighbors(minority, k, cov)
    base = rng.integers(0, minority.shape[0], size=n_new)
    pick = neighbors[base, rng.integers(0, k, size=n_new)]
    u = rng.random(n_new)[:, None]
    return minority[base] + u * (minority[pick] - minority[base])


def balance(fm: FeatureMatrix, k: int, rng: np.random.Generator, ratio: float = 1.0) -> FeatureMatrix:
    """Append synthetic minority rows until minority/majority reaches `ratio`."""
    counts = fm.counts()
    minority_label = min(counts, key=lambda label: (counts[label], label))
    majority = counts[-minority_label]
    target = int(round(ratio * majority))
    n_new = target - counts[minority_label]
    if n_new <= 0:
        return fm
    rows = fm.x[fm.y == minority_label]
    k_eff = min(k, rows.shape[0] - 1)
    if k_eff < 1:
        raise ValueError(f"class {minority_label} has {rows.shape[0]} sample(s); SMOTE needs at least 2")
    if k_eff < k:
        LOGGER.warning("SMOTE: only %d minority samples, using k=%d instead of %d", rows.shape[0], k_eff, k)
    synthetic = smote_oversample(rows, k_eff, n_new, rng)
    LOGGER.info("SMOTE: %d synthetic samples of class %d", n_new, minority_label)
    return fm.extend(synthetic, np.full(n_new, minority_label, dtype=int), synthetic=True)
