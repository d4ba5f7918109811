"""Mean wind shear plus Dryden turbulence driven by a standard-normal noise vector.

Frames: W has x along the mean wind, z up. Gusts are produced in W.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import linalg, signal

from .errors import ConfigError, require

CHANNELS = 3


@dataclass(frozen=True)
class ShearProfile:
    v_ref: float = 10.0
    z_ref: float = 100.0
    exponent: float = 0.15
    z_floor: float = 10.0

    def __post_init__(self) -> None:
        require(self.v_ref >= 0.0, "v_ref", "must be >= 0")
        require(self.z_ref > 0.0, "z_ref", "must be > 0")
        require(self.z_floor > 0.0, "z_floor", "must be > 0")
        require(math.isfinite(self.exponent), "exponent", "must be finite")


@dataclass(frozen=True)
class DrydenParams:
    length_u: float = 200.0
    length_v: float = 200.0
    length_w: float = 50.0
    sigma_u: float = 1.06
    sigma_v: float = 1.06
    sigma_w: float = 0.7
    # airspeed converting spatial scales into time constants
    airspeed: float = 30.0

    def __post_init__(self) -> None:
        for name in ("length_u", "length_v", "length_w", "airspeed"):
            require(getattr(self, name) > 0.0, name, "must be > 0")
        for name in ("sigma_u", "sigma_v", "sigma_w"):
            require(getattr(self, name) >= 0.0, name, "must be >= 0")


@dataclass(frozen=True)
class DiscreteFilter:
    ad: np.ndarray
    bd: np.ndarray
    c: np.ndarray


@dataclass(frozen=True, eq=False)
class DrydenState:
    params: DrydenParams
    dt: float
    x: np.ndarray = field(default_factory=lambda: np.zeros(5))

    def __post_init__(self) -> None:
        require(self.dt > 0.0, "dt", "must be > 0")
        require(bool(np.all(np.isfinite(self.x))), "x", "filter state must be finite")


@dataclass(frozen=True, eq=False)
class NoiseSeedVector:
    """Interleaved per time step: (u, v, w) noise for step 0, then step 1, ..."""

    samples: np.ndarray
    channels: int = CHANNELS
    f_s: float = 10.0

    def __post_init__(self) -> None:
        require(self.channels >= 1, "channels", "must be >= 1")
        require(self.samples.ndim == 1, "samples", "must be one-dimensional")
        require(self.samples.size % self.channels == 0, "samples", "length must be a multiple of channels")

    @property
    def n_steps(self) -> int:
        return self.samples.size // self.channels

    def as_matrix(self) -> np.ndarray:
        return self.samples.reshape(self.n_steps, self.channels)

    @classmethod
    def draw(cls, rng: np.random.Generator, t_sim: float, f_s: float, channels: int = CHANNELS) -> "NoiseSeedVector":
        return cls(rng.standard_normal(seed_dimension(t_sim, f_s, channels)), channels, f_s)

    @classmethod
    def zeros(cls, t_sim: float, f_s: float, channels: int = CHANNELS) -> "NoiseSeedVector":
        return cls(np.zeros(seed_dimension(t_sim, f_s, channels)), channels, f_s)


def seed_dimension(t_sim: float, f_s: float, channels: int = CHANNELS) -> int:
    return channels * math.ceil(round(t_sim * f_s, 9))


def shear_speed(profile: ShearProfile, z: float) -> float:
    if not math.isfinite(z):
        raise ValueError(f"altitude must be finite, got {z!r}")
    return profile.v_ref * (max(z, profile.z_floor) / profile.z_ref) ** profile.exponent


def _shaping_filters(params: DrydenParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # u: k/(s+a); v, w: (k s + k a/sqrt3)/(s+a)^2; unit-intensity white noise gives variance sigma^2
    a_u = params.airspeed / params.length_u
    blocks_a = [np.array([[-a_u]])]
    blocks_b = [np.array([[1.0]])]
    blocks_c = [np.array([[params.sigma_u * math.sqrt(2.0 * a_u)]])]
    for length, sigma in ((params.length_v, params.sigma_v), (params.length_w, params.sigma_w)):
        a = params.airspeed / length
        k = sigma * math.sqrt(3.0 * a)
        blocks_a.append(np.array([[0.0, 1.0], [-a * a, -2.0 * a]]))
        blocks_b.append(np.array([[0.0], [1.0]]))
        blocks_c.append(np.array([[k * a / math.sqrt(3.0), k]]))
    return linalg.block_diag(*blocks_a), linalg.block_diag(*blocks_b), linalg.block_diag(*blocks_c)


@lru_cache(maxsize=32)
def discrete_filter(params: DrydenParams, dt: float) -> DiscreteFilter:
    """Zero-order-hold discretization; noise samples are scaled by 1/sqrt(dt)."""
    a, b, c = _shaping_filters(params)
    d = np.zeros((c.shape[0], b.shape[1]))
    ad, bd, _, _, _ = signal.cont2discrete((a, b, c, d), dt, method="zoh")
    return DiscreteFilter(np.ascontiguousarray(ad), np.ascontiguousarray(bd) / math.sqrt(dt), np.ascontiguousarray(c))


def stationary_variance(params: DrydenParams, dt: float) -> np.ndarray:
    filt = discrete_filter(params, dt)
    p = linalg.solve_discrete_lyapunov(filt.ad, filt.bd @ filt.bd.T)
    return np.diag(filt.c @ p @ filt.c.T).copy()


def dryden_step(state: DrydenState, noise: np.ndarray) -> Tuple[DrydenState, np.ndarray]:
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (CHANNELS,):
        raise ConfigError(f"dryden noise: expected {CHANNELS} channels, got shape {noise.shape}")
    filt = discrete_filter(state.params, state.dt)
    x = filt.ad @ state.x + filt.bd @ noise
    return replace(state, x=x), filt.c @ x


def gust_series(params: DrydenParams, dt: float, noise: np.ndarray) -> np.ndarray:
    """Gusts for a (n_steps, 3) noise matrix; same arithmetic as repeated `dryden_step`."""
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 2 or noise.shape[1] != CHANNELS:
        raise ConfigError(f"dryden noise: expected (n, {CHANNELS}) matrix, got shape {noise.shape}")
    filt = discrete_filter(params, dt)
    out = np.empty_like(noise)
    x = np.zeros(filt.ad.shape[0])
    for k in range(noise.shape[0]):
        x = filt.ad @ x + filt.bd @ noise[k]
        out[k] = filt.c @ x
    return out


def wind_at(shear: ShearProfile, gust: np.ndarray, z: float) -> np.ndarray:
    w = np.array(gust, dtype=float)
    w[0] += shear_speed(shear, z)
    return w
