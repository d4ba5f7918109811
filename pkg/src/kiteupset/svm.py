"""Soft-margin RBF support vector machine trained by SMO.

Working pairs are the maximal violating pair of the dual; the bias averages
-y_i * grad_i over free support vectors. Models serialize to JSON and reproduce
the decision value bit for bit.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics.pairwise import rbf_kernel

from .errors import SchemaError, SvmTrainingError, require
from .io import read_json, write_json

LOGGER = logging.getLogger(__name__)

MODEL_SCHEMA = "svm/1"
_TAU = 1e-12


@dataclass(frozen=True)
class SmoSolution:
    alpha: np.ndarray
    bias: float
    iterations: int
    gap: float


def kernel_matrix(a: np.ndarray, b: np.ndarray, sigma2: float) -> np.ndarray:
    """exp(-||a_i - b_j||^2 / sigma2)."""
    return rbf_kernel(np.atleast_2d(a), np.atleast_2d(b), gamma=1.0 / sigma2)


def smo_solve(
    k: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float = 1e-3,
    max_iter: Optional[int] = None,
) -> SmoSolution:
    y = np.asarray(y, dtype=float)
    n = y.size
    max_iter = max_iter if max_iter is not None else max(100_000, 100 * n)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(k).copy()
    gap = math.inf
    for it in range(max_iter):
        yg = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        if not np.any(up) or not np.any(low):
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(yg[up])])
        j = int(np.flatnonzero(low)[np.argmin(yg[low])])
        gap = float(yg[i] - yg[j])
        if gap < tol:
            break
        a_i, a_j = alpha[i], alpha[j]
        quad = diag[i] + diag[j] - 2.0 * k[i, j]
        if quad <= 0.0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = a_i - a_j
            a_i += delta
            a_j += delta
            if diff > 0.0:
                if a_j < 0.0:
                    a_j, a_i = 0.0, diff
            elif a_i < 0.0:
                a_i, a_j = 0.0, -diff
            if diff > 0.0:
                if a_i > c:
                    a_i, a_j = c, c - diff
            elif a_j > c:
                a_j, a_i = c, c + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = a_i + a_j
            a_i -= delta
            a_j += delta
            if total > c:
                if a_i > c:
                    a_i, a_j = c, total - c
            elif a_j < 0.0:
                a_j, a_i = 0.0, total
            if total > c:
                if a_j > c:
                    a_j, a_i = c, total - c
            elif a_i < 0.0:
                a_i, a_j = 0.0, total
        d_i = a_i - alpha[i]
        d_j = a_j - alpha[j]
        alpha[i], alpha[j] = a_i, a_j
        grad += y * (y[i] * d_i * k[:, i] + y[j] * d_j * k[:, j])
    else:
        raise SvmTrainingError(f"SMO did not reach tolerance {tol} after {max_iter} iterations (gap {gap:.3e})")
    return SmoSolution(alpha, _bias(alpha, grad, y, c), it, gap)


def _bias(alpha: np.ndarray, grad: np.ndarray, y: np.ndarray, c: float) -> float:
    yg = y * grad
    free = (alpha > 0.0) & (alpha < c)
    if np.any(free):
        return -float(np.mean(yg[free]))
    at_upper = alpha >= c
    at_lower = alpha <= 0.0
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = float(np.min(yg[ub_mask])) if np.any(ub_mask) else math.inf
    lb = float(np.max(yg[lb_mask])) if np.any(lb_mask) else -math.inf
    if not (math.isfinite(ub) and math.isfinite(lb)):
        return -(ub if math.isfinite(ub) else lb)
    return -0.5 * (ub + lb)


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    sigma2: float
    c: float
    feature_names: Tuple[str, ...]
    selected: Tuple[int, ...]
    mean: np.ndarray
    scale: np.ndarray
    schema: str = MODEL_SCHEMA

    def __post_init__(self) -> None:
        require(self.sigma2 > 0.0, "sigma2", "must be > 0")
        require(bool(np.all(self.alphas > 0.0)), "alphas", "support vectors need positive multipliers")
        if self.support_vectors.shape != (self.alphas.size, len(self.selected)):
            raise SchemaError(
                f"support vectors have shape {self.support_vectors.shape}, "
                f"expected ({self.alphas.size}, {len(self.selected)})"
            )

    @property
    def n_support(self) -> int:
        return int(self.alphas.size)

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Select and standardize full-schema rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != len(self.feature_names):
            raise SchemaError(f"expected {len(self.feature_names)} features, got {x.shape[1]}")
        return (x[:, list(self.selected)] - self.mean) / self.scale

    def decision_standardized(self, z: np.ndarray) -> np.ndarray:
        k = kernel_matrix(z, self.support_vectors, self.sigma2)
        return k @ (self.alphas * self.labels) + self.bias

    def decision(self, x: np.ndarray) -> np.ndarray:
        return self.decision_standardized(self.transform(x))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema,
            "sigma2": self.sigma2,
            "c": self.c,
            "bias": self.bias,
            "feature_names": list(self.feature_names),
            "selected": list(self.selected),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "alphas": self.alphas.tolist(),
            "labels": self.labels.astype(int).tolist(),
            "support_vectors": self.support_vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "SvmModel":
        if payload.get("schema") != MODEL_SCHEMA:
            raise SchemaError(f"model schema {payload.get('schema')!r}, expected {MODEL_SCHEMA!r}")
        n_sel = len(payload["selected"])
        return cls(
            support_vectors=np.array(payload["support_vectors"], dtype=float).reshape(-1, n_sel),
            alphas=np.array(payload["alphas"], dtype=float),
            labels=np.array(payload["labels"], dtype=float),
            bias=float(payload["bias"]),
            sigma2=float(payload["sigma2"]),
            c=float(payload["c"]),
            feature_names=tuple(payload["feature_names"]),
            selected=tuple(int(i) for i in payload["selected"]),
            mean=np.array(payload["mean"], dtype=float),
            scale=np.array(payload["scale"], dtype=float),
        )


def standardization(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = np.mean(x, axis=0)
    scale = np.std(x, axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return mean, scale


def train_svm(
    x: np.ndarray,
    y: np.ndarray,
    sigma2: float,
    c: float,
    tol: float = 1e-3,
    feature_names: Optional[Sequence[str]] = None,
    selected: Optional[Sequence[int]] = None,
    max_iter: Optional[int] = None,
) -> SvmModel:
    """Fit on raw full-schema rows; `selected` columns are standardized and kept."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    require(sigma2 > 0.0, "sigma2", "must be > 0")
    require(c > 0.0, "c", "must be > 0")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise ValueError("training set needs both classes")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(x.shape[1]))
    cols = tuple(selected) if selected is not None else tuple(range(x.shape[1]))
    mean, scale = standardization(x[:, list(cols)])
    z = (x[:, list(cols)] - mean) / scale
    sol = smo_solve(kernel_matrix(z, z, sigma2), y, c, tol, max_iter)
    keep = sol.alpha > 0.0
    LOGGER.debug("SMO: %d iterations, gap %.2e, %d support vectors", sol.iterations, sol.gap, int(keep.sum()))
    return SvmModel(
        support_vectors=z[keep],
        alphas=sol.alpha[keep],
        labels=y[keep],
        bias=sol.bias,
        sigma2=sigma2,
        c=c,
        feature_names=names,
        selected=cols,
        mean=mean,
        scale=scale,
    )


def svm_predict(model: SvmModel, x: np.ndarray) -> Tuple[float, int]:
    """Decision value and class for one full-schema feature vector; f == 0 counts as nominal."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise SchemaError(f"expected one feature vector, got shape {x.shape}")
    f = float(model.decision(x)[0])
    return f, 1 if f >= 0.0 else -1


def save_model(path: str | Path, model: SvmModel, meta: Optional[Dict[str, Any]] = None) -> None:
    payload = model.to_dict()
    payload["meta"] = dict(meta or {})
    write_json(path, payload)


def load_model(path: str | Path) -> SvmModel:
    return SvmModel.from_dict(read_json(path))
