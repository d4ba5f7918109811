"""Cascaded flight control: path loop, attitude reference models, rate-loop inversion.

The path loop runs with guidance at the logging rate; the attitude and rate loops run
at the integrator rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import frames
from .errors import require
from .guidance import (
    AttitudeSetpoint,
    GuidanceCommand,
    GuidanceParams,
    PathShape,
    attitude_setpoints,
    path_derivatives,
    path_point_W,
)
from .plant import AeroResult, AircraftParams, AircraftState, base_moment_coefficients, normalized_rates

_Y_B = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class ControlGains:
    lookahead: float = 40.0
    k_course: float = 1.2
    k_gamma: float = 1.2
    nu_max: float = 1.5
    mu_bandwidth: float = 3.0
    alpha_bandwidth: float = 5.0
    k_mu: float = 3.0
    k_alpha: float = 4.0
    k_beta: float = 2.0
    k_rates: Tuple[float, float, float] = (10.0, 10.0, 6.0)
    rate_max: float = math.radians(120.0)

    def __post_init__(self) -> None:
        require(self.lookahead > 0.0, "lookahead", "must be > 0")
        require(self.nu_max > 0.0, "nu_max", "must be > 0")
        require(all(k > 0.0 for k in self.k_rates), "k_rates", "must be > 0")
        require(self.rate_max > 0.0, "rate_max", "must be > 0")


@dataclass(frozen=True)
class ControllerState:
    mu_ref: float
    alpha_ref: float


@dataclass(frozen=True, eq=False)
class SurfaceCommand:
    deflection_deg: np.ndarray
    force_set: float
    saturated: bool
    rates_cmd: np.ndarray


@dataclass(frozen=True)
class Attitude:
    mu: float
    alpha: float
    beta: float


def measure_attitude(state: AircraftState, aero: AeroResult) -> Attitude:
    r_ob = frames.quat_to_dcm(state.quaternion)
    if aero.degenerate:
        return Attitude(0.0, 0.0, 0.0)
    return Attitude(frames.aero_bank_angle(r_ob, aero.airspeed_b), aero.alpha, aero.beta)


def desired_direction_path(
    position_w: np.ndarray,
    s: float,
    shape: PathShape,
    phi_r: float,
    lookahead: float,
) -> np.ndarray:
    """Unit direction (W) toward a carrot `lookahead` metres ahead on the sphere path."""
    r = float(np.linalg.norm(position_w))
    p_hat = position_w / r
    _, dp, _ = path_derivatives(s, shape, phi_r)
    ds = lookahead / (r * max(float(np.linalg.norm(dp)), 1e-6))
    carrot = path_point_W(s + ds, shape, phi_r)
    d = carrot - float(carrot @ p_hat) * p_hat
    n = float(np.linalg.norm(d))
    if n < 1e-9:
        return frames.unit(dp - float(dp @ p_hat) * p_hat)
    return d / n


def desired_direction_line(position_w: np.ndarray, start: np.ndarray, end: np.ndarray, lookahead: float) -> np.ndarray:
    seg = end - start
    length = float(np.linalg.norm(seg))
    u = seg / length
    along = min(max(float((position_w - start) @ u), 0.0), length)
    carrot = start + min(along + lookahead, length) * u
    d = carrot - position_w
    if float(np.linalg.norm(d)) < 1e-6:
        return u
    return frames.unit(d)


def path_loop(
    velocity_o: np.ndarray,
    direction_w: np.ndarray,
    gains: ControlGains,
) -> Tuple[float, float, float, float]:
    """Pseudo-controls (nu_chi, nu_gamma) turning `velocity_o` toward `direction_w`."""
    chi, gamma = frames.course_and_path_angle(velocity_o)
    speed = float(np.linalg.norm(velocity_o))
    desired_o = frames.w_to_o(direction_w) * speed
    chi_des, gamma_des = frames.course_and_path_angle(desired_o)
    nu_chi = gains.k_course * frames.wrap_pi(chi_des - chi)
    nu_gamma = gains.k_gamma * (gamma_des - gamma)
    nu_chi = min(max(nu_chi, -gains.nu_max), gains.nu_max)
    nu_gamma = min(max(nu_gamma, -gains.nu_max), gains.nu_max)
    return nu_chi, nu_gamma, chi, gamma


def guidance_command(
    state: AircraftState,
    aero: AeroResult,
    direction_w: np.ndarray,
    force_set: float,
    aircraft: AircraftParams,
    gains: ControlGains,
    params: GuidanceParams,
) -> GuidanceCommand:
    r_ob = frames.quat_to_dcm(state.quaternion)
    velocity_o = r_ob @ state.velocity
    radial = frames.unit(state.position)
    # steer only the tangential velocity; reeling moves the aircraft radially
    tangential_o = velocity_o - float(velocity_o @ radial) * radial
    if float(np.linalg.norm(tangential_o)) < 1e-6:
        tangential_o = velocity_o
    nu_chi, nu_gamma, _, _ = path_loop(tangential_o, direction_w, gains)
    chi, gamma = frames.course_and_path_angle(velocity_o)
    sp: AttitudeSetpoint = attitude_setpoints(
        nu_chi,
        nu_gamma,
        chi,
        gamma,
        float(np.linalg.norm(velocity_o)),
        aero.airspeed,
        state.position,
        force_set,
        aircraft.mass,
        aircraft.gravity,
        aircraft.rho,
        aircraft.wing_area,
        aircraft.c_l0,
        aircraft.c_l_alpha,
        params,
    )
    return GuidanceCommand(nu_chi, nu_gamma, chi, gamma, sp.mu, sp.alpha, sp.c_l, force_set, sp.saturated)


def invert_rate_loop(
    rates: np.ndarray,
    rates_cmd: np.ndarray,
    aero: AeroResult,
    aircraft: AircraftParams,
    gains: ControlGains,
) -> Tuple[np.ndarray, bool]:
    """Surface deflections (deg, unclamped) giving the commanded angular acceleration."""
    j = aircraft.inertia
    omega_dot = np.asarray(gains.k_rates) * (rates_cmd - rates)
    moment = j @ omega_dot + np.cross(rates, j @ rates)
    qs = aero.dynamic_pressure * aircraft.wing_area
    if qs <= 0.0:
        return np.zeros(3), True
    base = base_moment_coefficients(aircraft, aero.alpha, aero.beta, normalized_rates(aircraft, rates, aero.airspeed))
    needed = moment / (qs * aircraft.reference_lengths) - base
    return np.degrees(np.linalg.solve(aircraft.control_matrix, needed)), False


def cascade_step(
    state: AircraftState,
    aero: AeroResult,
    specific_force_b: np.ndarray,
    command: GuidanceCommand,
    ctrl: ControllerState,
    gains: ControlGains,
    aircraft: AircraftParams,
    limits_deg: Tuple[float, float, float],
    dt: float,
) -> Tuple[ControllerState, SurfaceCommand]:
    if aero.degenerate:
        return ctrl, SurfaceCommand(np.zeros(3), command.force_set, True, np.zeros(3))
    att = measure_attitude(state, aero)

    mu_rate_ref = gains.mu_bandwidth * frames.wrap_pi(command.mu_set - ctrl.mu_ref)
    alpha_rate_ref = gains.alpha_bandwidth * (command.alpha_set - ctrl.alpha_ref)
    ctrl = ControllerState(
        mu_ref=frames.wrap_pi(ctrl.mu_ref + dt * mu_rate_ref),
        alpha_ref=ctrl.alpha_ref + dt * alpha_rate_ref,
    )
    mu_dot = mu_rate_ref + gains.k_mu * frames.wrap_pi(ctrl.mu_ref - att.mu)
    alpha_dot = alpha_rate_ref + gains.k_alpha * (ctrl.alpha_ref - att.alpha)
    beta_dot = -gains.k_beta * att.beta

    v_a = aero.airspeed_b
    x_a = v_a / aero.airspeed
    z_s = frames.unit(np.cross(x_a, _Y_B))
    turn = np.cross(v_a, specific_force_b) / (aero.airspeed * aero.airspeed)
    rates_cmd = turn + mu_dot * x_a + alpha_dot * _Y_B - beta_dot * z_s
    rates_cmd = np.clip(rates_cmd, -gains.rate_max, gains.rate_max)

    deflection, saturated = invert_rate_loop(state.rates, rates_cmd, aero, aircraft, gains)
    limits = np.asarray(limits_deg)
    clipped = np.clip(deflection, -limits, limits)
    saturated = saturated or bool(np.any(clipped != deflection)) or command.saturated
    return ctrl, SurfaceCommand(clipped, command.force_set, saturated, rates_cmd)
