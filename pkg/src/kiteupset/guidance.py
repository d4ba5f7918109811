"""Reference path on the tether sphere, mode logic, attitude set points and avoidance."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from . import frames
from .errors import require

LOGGER = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
RETRACTION_MARKS = (0.5 * math.pi, 1.5 * math.pi)

TRACTION = "traction"
RETRACTION = "retraction"
TRANSITION = "transition"
AVOIDANCE = "avoidance"


@dataclass(frozen=True)
class PathShape:
    a: float = 0.3
    b: float = 0.6
    phi_set: float = math.radians(25.0)
    phi_0: float = math.radians(75.0)
    omega_r: float = 0.05
    freeze_gap: float = math.radians(1.0)

    def __post_init__(self) -> None:
        require(self.a > 0.0 and self.b > 0.0, "a", "shape parameters must be > 0")
        require(0.0 < self.phi_set < self.phi_0 < 0.5 * math.pi, "phi_set", "need 0 < phi_set < phi_0 < pi/2")
        require(self.omega_r > 0.0, "omega_r", "must be > 0")
        require(self.freeze_gap > 0.0, "freeze_gap", "must be > 0")


@dataclass(frozen=True)
class GuidanceParams:
    force_traction: float = 1600.0
    force_retraction: float = 80.0
    force_avoidance: float = 10.0
    rearm_factor: float = 1.2
    recovered_fraction: float = 0.9
    avoidance_bandwidth: float = 1.0
    transition_bandwidth: float = 0.1
    length_initial: float = 250.0
    length_trigger: float = 330.0
    length_hard: float = 600.0
    length_min: float = 180.0
    retraction_radius: float = 200.0
    transition_done: float = math.radians(2.0)
    alpha_min: float = math.radians(-5.0)
    alpha_max: float = math.radians(14.0)
    mu_max: float = math.radians(85.0)
    speed_min: float = 5.0

    def __post_init__(self) -> None:
        require(self.force_traction > 0.0, "force_traction", "must be > 0")
        require(self.force_retraction >= 0.0, "force_retraction", "must be >= 0")
        require(self.force_avoidance >= 0.0, "force_avoidance", "must be >= 0")
        require(self.rearm_factor >= 1.0, "rearm_factor", "must be >= 1")
        require(0.0 < self.recovered_fraction <= 1.0, "recovered_fraction", "must be in (0, 1]")
        require(self.avoidance_bandwidth > 0.0, "avoidance_bandwidth", "must be > 0")
        require(self.transition_bandwidth > 0.0, "transition_bandwidth", "must be > 0")
        require(
            0.0 < self.length_min < self.length_initial < self.length_trigger < self.length_hard,
            "length_trigger",
            "need 0 < length_min < length_initial < length_trigger < length_hard",
        )
        require(self.retraction_radius > 0.0, "retraction_radius", "must be > 0")
        require(self.alpha_min < self.alpha_max, "alpha_min", "must be below alpha_max")
        require(0.0 < self.mu_max < 0.5 * math.pi, "mu_max", "must be in (0, pi/2)")


@dataclass(frozen=True, eq=False)
class GuidanceState:
    phase: str
    s: float
    phi_r: float
    force_set: float
    force_target: float
    length_at_mark: float
    half_eight_increment: float = 0.0
    glide_start: Optional[np.ndarray] = None
    glide_end: Optional[np.ndarray] = None
    # None, "shed" (set point collapsed) or "recover" (set point restored, filter rising)
    avoidance: Optional[str] = None

    @property
    def mode(self) -> str:
        return AVOIDANCE if self.avoidance is not None else self.phase


@dataclass(frozen=True)
class GuidanceCommand:
    nu_chi: float
    nu_gamma: float
    chi: float
    gamma: float
    mu_set: float
    alpha_set: float
    c_l_set: float
    force_set: float
    saturated: bool = False


@dataclass(frozen=True)
class AttitudeSetpoint:
    mu: float
    alpha: float
    c_l: float
    saturated: bool


def lemniscate_point(s: float, a: float, b: float) -> Tuple[float, float]:
    c = math.cos(s)
    sn = math.sin(s)
    den = 1.0 + (a / b * c) ** 2
    return b * sn / den, a * sn * c / den


def _rotation(phi_r: float) -> np.ndarray:
    c, s = math.cos(phi_r), math.sin(phi_r)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def path_point_W(s: float, shape: PathShape, phi_r: float) -> np.ndarray:
    lam, phi = lemniscate_point(s, shape.a, shape.b)
    p = np.array([math.cos(lam) * math.cos(phi), math.sin(lam) * math.cos(phi), math.sin(phi)])
    return _rotation(phi_r) @ p


def path_derivatives(s: float, shape: PathShape, phi_r: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Path point with its first and second derivative in s, all in W."""
    a, b = shape.a, shape.b
    r2 = (a / b) ** 2
    c, sn = math.cos(s), math.sin(s)
    c2, s2 = math.cos(2.0 * s), math.sin(2.0 * s)
    d = 1.0 + r2 * c * c
    d1 = -r2 * s2
    d2 = -2.0 * r2 * c2

    def quotient(n: float, n1: float, n2: float) -> Tuple[float, float, float]:
        f = n / d
        f1 = (n1 * d - n * d1) / d**2
        f2 = (n2 * d - n * d2) / d**2 - 2.0 * d1 * (n1 * d - n * d1) / d**3
        return f, f1, f2

    lam, lam1, lam2 = quotient(b * sn, b * c, -b * sn)
    phi, phi1, phi2 = quotient(0.5 * a * s2, a * c2, -2.0 * a * s2)

    cl, sl = math.cos(lam), math.sin(lam)
    cp, sp = math.cos(phi), math.sin(phi)
    p = np.array([cl * cp, sl * cp, sp])
    p_l = np.array([-sl * cp, cl * cp, 0.0])
    p_p = np.array([-cl * sp, -sl * sp, cp])
    p_ll = np.array([-cl * cp, -sl * cp, 0.0])
    p_pp = np.array([-cl * cp, -sl * cp, -sp])
    p_lp = np.array([sl * sp, -cl * sp, 0.0])
    dp = p_l * lam1 + p_p * phi1
    ddp = p_ll * lam1**2 + 2.0 * p_lp * lam1 * phi1 + p_pp * phi1**2 + p_l * lam2 + p_p * phi2
    rot = _rotation(phi_r)
    return rot @ p, rot @ dp, rot @ ddp


def _grid_search(p_hat: np.ndarray, shape: PathShape, phi_r: float, samples: int = 64) -> float:
    grid = np.arange(samples) * (TWO_PI / samples)
    scores = [float(p_hat @ path_point_W(float(s), shape, phi_r)) for s in grid]
    return float(grid[int(np.argmax(scores))])


def _newton(p_hat: np.ndarray, shape: PathShape, phi_r: float, s: float, iterations: int, tol: float) -> Optional[float]:
    for _ in range(iterations):
        _, dp, ddp = path_derivatives(s, shape, phi_r)
        slope = float(p_hat @ dp)
        curvature = float(p_hat @ ddp)
        if curvature >= 0.0:
            return None
        step = -slope / curvature
        if abs(step) > 0.5:
            return None
        s += step
        if abs(step) < tol:
            return s % TWO_PI
    return None


def closest_point_newton(
    p_hat: np.ndarray,
    shape: PathShape,
    phi_r: float,
    s_init: Optional[float],
    iterations: int = 20,
    tol: float = 1e-10,
) -> Tuple[float, bool]:
    """Path parameter nearest to `p_hat` (unit, W) and whether the grid fallback ran."""
    if s_init is not None:
        s = _newton(p_hat, shape, phi_r, float(s_init), iterations, tol)
        if s is not None:
            return s, False
        LOGGER.debug("closest point: Newton failed from s=%.4f, falling back to grid search", s_init)
    s0 = _grid_search(p_hat, shape, phi_r)
    s = _newton(p_hat, shape, phi_r, s0, iterations, tol)
    return (s0 if s is None else s), s_init is not None


def transition_filter_step(phi_r: float, shape: PathShape, gap: float, dt: float) -> float:
    if gap > shape.freeze_gap:
        return phi_r
    phi_r = phi_r + dt * shape.omega_r * (shape.phi_set - phi_r)
    return min(max(phi_r, shape.phi_set), shape.phi_0)


def arc_gap(position_w: np.ndarray, target_w: np.ndarray) -> float:
    return frames.elevation(position_w) - frames.elevation(target_w)


def crossed_mark(s_prev: float, s_new: float) -> Optional[float]:
    """Retraction mark passed when moving forward from s_prev to s_new, if any."""
    ds = (s_new - s_prev) % TWO_PI
    if ds > math.pi:
        return None
    for mark in RETRACTION_MARKS:
        d = (mark - s_prev) % TWO_PI
        if 0.0 < d <= ds:
            return mark
    return None


def retraction_trigger(state: GuidanceState, s_new: float, length: float, params: GuidanceParams) -> bool:
    if state.phase != TRACTION or state.avoidance is not None:
        return False
    if crossed_mark(state.s, s_new) is None:
        return False
    if length >= params.length_trigger:
        return True
    return length + state.half_eight_increment > params.length_hard


def attitude_setpoints(
    nu_chi: float,
    nu_gamma: float,
    chi: float,
    gamma: float,
    v_k: float,
    v_a: float,
    position_o: np.ndarray,
    force_set: float,
    mass: float,
    gravity: float,
    rho: float,
    wing_area: float,
    c_l0: float,
    c_l_alpha: float,
    params: GuidanceParams,
) -> AttitudeSetpoint:
    m_ko = frames.kinematic_dcm(chi, gamma)
    f_t_k = m_ko @ (-frames.unit(position_o) * force_set)
    v_k = max(v_k, params.speed_min)
    v_a = max(v_a, params.speed_min)
    f_y = mass * nu_chi * math.cos(gamma) * v_k - f_t_k[1]
    f_z = mass * nu_gamma * v_k + math.cos(gamma) * mass * gravity + f_t_k[2]
    mu = math.atan2(f_y, f_z)
    saturated = abs(mu) > params.mu_max
    mu = min(max(mu, -params.mu_max), params.mu_max)
    c_l = math.hypot(f_y, f_z) / (0.5 * rho * v_a * v_a * wing_area)
    alpha = (c_l - c_l0) / c_l_alpha
    if alpha < params.alpha_min or alpha > params.alpha_max:
        saturated = True
        alpha = min(max(alpha, params.alpha_min), params.alpha_max)
    return AttitudeSetpoint(mu, alpha, c_l, saturated)


def filter_force(state: GuidanceState, bandwidth: float, dt: float) -> GuidanceState:
    f = state.force_set + dt * bandwidth * (state.force_target - state.force_set)
    return replace(state, force_set=max(f, 0.0))


def avoidance_step(
    state: GuidanceState,
    y_hat: int,
    force_measured: float,
    params: GuidanceParams,
    dt: float,
) -> Tuple[GuidanceState, Optional[str]]:
    """Advance the avoidance sub-state and the set-point filter; returns an event name if any."""
    if state.phase == RETRACTION:
        return state, None
    event: Optional[str] = None
    if y_hat == -1 and state.avoidance != "shed":
        state = replace(state, avoidance="shed", force_target=params.force_avoidance)
        event = "avoidance_trigger"
    elif (
        state.avoidance == "shed"
        and y_hat == 1
        and force_measured <= params.rearm_factor * params.force_avoidance
    ):
        state = replace(state, avoidance="recover", force_target=params.force_traction)
        event = "avoidance_rearm"
    if state.avoidance is not None:
        state = filter_force(state, params.avoidance_bandwidth, dt)
        if state.avoidance == "recover" and state.force_set >= params.recovered_fraction * params.force_traction:
            state = replace(state, avoidance=None)
            event = "avoidance_complete"
    return state, event
