"""Per-signal window statistics and the feature-matrix container."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, stats

from .errors import SchemaError
from .io import read_csv, short_hash, write_csv

LOGGER = logging.getLogger(__name__)

SCHEMA_VERSION = "features/1"
DEFAULT_TAUS: Tuple[float, ...] = (0.5, 1.0)
RMS_FLOOR = 1e-12
MIN_SAMPLES = 8

_BASE_FEATURES = (
    "mean",
    "median",
    "rms",
    "variance",
    "max",
    "min",
    "peak_to_peak",
    "skewness",
    "kurtosis",
    "crest_factor",
    "mad",
    "cumsum_range",
    "max_slope",
    "spec_max",
    "spec_median",
    "spec_max_above_1hz",
)


def _tau_name(tau: float) -> str:
    return f"trev_{tau:g}"


def per_signal_names(taus: Sequence[float] = DEFAULT_TAUS) -> Tuple[str, ...]:
    return _BASE_FEATURES[:12] + tuple(_tau_name(t) for t in taus) + _BASE_FEATURES[12:]


def feature_names(signals: Sequence[str], taus: Sequence[float] = DEFAULT_TAUS) -> Tuple[str, ...]:
    return tuple(f"{sig}.{feat}" for sig in signals for feat in per_signal_names(taus))


def schema_hash(names: Sequence[str]) -> str:
    return short_hash(SCHEMA_VERSION + "\n" + "\n".join(names))


def time_reversal_stat(x: np.ndarray, tau: float, f_s: float) -> float:
    """Normalized third moment of lag-`tau` increments; zero when all increments vanish."""
    lag = tau * f_s
    if abs(lag - round(lag)) > 1e-9 or round(lag) < 1:
        raise ValueError(f"tau={tau} s is not a positive multiple of the sample period 1/{f_s}")
    lag = int(round(lag))
    x = np.asarray(x, dtype=float)
    if x.size <= lag + 1:
        raise ValueError(f"need more than {lag + 1} samples for tau={tau} s, got {x.size}")
    d = x[lag:] - x[:-lag]
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        return 0.0
    m3 = float(np.mean(d * d * d))
    return m3 / (m2 * math.sqrt(m2))


def amplitude_spectrum(x: np.ndarray, f_s: float) -> Tuple[np.ndarray, np.ndarray]:
    """One-sided amplitude spectrum of the mean-removed window, DC bin dropped."""
    x = np.asarray(x, dtype=float)
    n = x.size
    amp = 2.0 * np.abs(fft.rfft(x - np.mean(x))) / n
    freqs = fft.rfftfreq(n, d=1.0 / f_s)
    if n % 2 == 0:
        # the Nyquist bin has no mirrored partner
        amp[-1] *= 0.5
    return freqs[1:], amp[1:]


def signal_features(x: np.ndarray, f_s: float, taus: Sequence[float] = DEFAULT_TAUS) -> Dict[str, float]:
    x = np.asarray(x, dtype=float)
    if x.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples per signal, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal window contains non-finite samples")
    rms = math.sqrt(float(np.mean(x * x)))
    flat = float(np.ptp(x)) == 0.0
    cumsum = np.cumsum(x)
    freqs, amp = amplitude_spectrum(x, f_s)
    above = amp[freqs > 1.0]
    out: Dict[str, float] = {
        "mean": float(np.mean(x)),
        "median": float(np.median(x)),
        "rms": rms,
        "variance": float(np.var(x)),
        "max": float(np.max(x)),
        "min": float(np.min(x)),
        "peak_to_peak": float(np.ptp(x)),
        "skewness": 0.0 if flat else float(stats.skew(x)),
        "kurtosis": 0.0 if flat else float(stats.kurtosis(x)),
        "crest_factor": 1.0 if rms < RMS_FLOOR else float(np.max(np.abs(x))) / rms,
        "mad": float(stats.median_abs_deviation(x, scale=1.0)),
        "cumsum_range": float(np.max(cumsum) - np.min(cumsum)),
    }
    for tau in taus:
        out[_tau_name(tau)] = time_reversal_stat(x, tau, f_s)
    out["max_slope"] = float(np.max(np.abs(np.diff(x)))) * f_s
    out["spec_max"] = float(np.max(amp)) if amp.size else 0.0
    out["spec_median"] = float(np.median(amp)) if amp.size else 0.0
    out["spec_max_above_1hz"] = float(np.max(above)) if above.size else 0.0
    return out


def extract_features(
    signals: Mapping[str, np.ndarray],
    order: Sequence[str],
    f_s: float,
    taus: Sequence[float] = DEFAULT_TAUS,
) -> np.ndarray:
    """Feature vector in schema order for one window of signals."""
    values: List[float] = []
    for name in order:
        if name not in signals:
            raise SchemaError(f"window has no signal {name!r}")
        feats = signal_features(signals[name], f_s, taus)
        values.extend(feats[f] for f in per_signal_names(taus))
    return np.asarray(values, dtype=float)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    x: np.ndarray
    y: np.ndarray
    names: Tuple[str, ...]
    run_ids: Tuple[str, ...] = ()
    end_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    synthetic: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self) -> None:
        n = self.x.shape[0]
        if self.x.ndim != 2 or self.x.shape[1] != len(self.names):
            raise SchemaError(f"feature matrix has shape {self.x.shape} but {len(self.names)} names")
        if self.y.shape != (n,):
            raise SchemaError(f"labels have shape {self.y.shape}, expected ({n},)")
        if not np.all(np.isin(self.y, (-1, 1))):
            raise SchemaError("labels must be -1 (upset) or 1 (nominal)")
        if not np.all(np.isfinite(self.x)):
            raise SchemaError("feature matrix contains non-finite values")
        if not self.run_ids:
            object.__setattr__(self, "run_ids", ("",) * n)
        if self.end_times.size == 0 and n:
            object.__setattr__(self, "end_times", np.full(n, math.nan))
        if self.synthetic.size == 0 and n:
            object.__setattr__(self, "synthetic", np.zeros(n, dtype=bool))

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @property
    def schema(self) -> str:
        return schema_hash(self.names)

    def counts(self) -> Dict[int, int]:
        return {label: int(np.count_nonzero(self.y == label)) for label in (-1, 1)}

    def subset(self, rows: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            self.x[rows],
            self.y[rows],
            self.names,
            tuple(self.run_ids[i] for i in np.arange(len(self))[rows]),
            self.end_times[rows],
            self.synthetic[rows],
        )

    def extend(self, x: np.ndarray, y: np.ndarray, synthetic: bool = True) -> "FeatureMatrix":
        n = x.shape[0]
        return replace(
            self,
            x=np.vstack([self.x, x]),
            y=np.concatenate([self.y, y]),
            run_ids=self.run_ids + ("synthetic" if synthetic else "",) * n,
            end_times=np.concatenate([self.end_times, np.full(n, math.nan)]),
            synthetic=np.concatenate([self.synthetic, np.full(n, synthetic)]),
        )


def build_feature_matrix(
    segments: Sequence[Any],
    order: Sequence[str],
    f_s: float,
    taus: Sequence[float] = DEFAULT_TAUS,
) -> FeatureMatrix:
    names = feature_names(order, taus)
    if not segments:
        return FeatureMatrix(np.zeros((0, len(names))), np.zeros(0, dtype=int), names)
    rows = [extract_features(seg.signals, order, f_s, taus) for seg in segments]
    return FeatureMatrix(
        np.vstack(rows),
        np.array([seg.label for seg in segments], dtype=int),
        names,
        tuple(seg.run_id for seg in segments),
        np.array([seg.end_time for seg in segments], dtype=float),
        np.zeros(len(segments), dtype=bool),
    )


def save_feature_matrix(path: str | Path, fm: FeatureMatrix, meta: Optional[Dict[str, Any]] = None) -> None:
    comments = {"schema": SCHEMA_VERSION, "schema_hash": fm.schema}
    comments.update(meta or {})
    fields = ["run_id", "end_time", "synthetic", "label", *fm.names]
    rows = []
    for i in range(len(fm)):
        row: Dict[str, Any] = {
            "run_id": fm.run_ids[i],
            "end_time": float(fm.end_times[i]),
            "synthetic": int(fm.synthetic[i]),
            "label": int(fm.y[i]),
        }
        row.update({name: float(v) for name, v in zip(fm.names, fm.x[i])})
        rows.append(row)
    write_csv(path, rows, fields, comments)


def load_feature_matrix(path: str | Path) -> Tuple[FeatureMatrix, Dict[str, str]]:
    meta, rows = read_csv(path)
    if meta.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema {meta.get('schema')!r}, expected {SCHEMA_VERSION!r}")
    with Path(path).open("r", encoding="utf-8") as f:
        header = next(line for line in f if not line.startswith("# "))
    names = tuple(header.strip().split(",")[4:])
    if schema_hash(names) != meta.get("schema_hash"):
        raise SchemaError(f"{path}: feature columns do not match the recorded schema hash")
    n = len(rows)
    x = np.array([[float(r[name]) for name in names] for r in rows], dtype=float).reshape(n, len(names))
    fm = FeatureMatrix(
        x,
        np.array([int(r["label"]) for r in rows], dtype=int),
        names,
        tuple(r["run_id"] for r in rows),
        np.array([float(r["end_time"]) for r in rows], dtype=float),
        np.array([bool(int(r["synthetic"])) for r in rows], dtype=bool),
    )
    return fm, meta
