"""Rigid aircraft, surface actuators, lumped-mass tether and winch.

Aircraft and tether nodes are integrated together with classical RK4; actuators and
the winch advance with their discrete laws once per integrator step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np

from . import frames
from .errors import ConfigError, require
from .windfield import ShearProfile

WindField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AircraftParams:
    mass: float = 35.0
    inertia_diag: Tuple[float, float, float] = (25.0, 32.0, 56.0)
    inertia_xz: float = 0.0
    wing_area: float = 3.0
    span: float = 4.24
    chord: float = 0.71
    rho: float = 1.225
    gravity: float = 9.81
    c_l0: float = 0.3
    c_l_alpha: float = 5.0
    c_d0: float = 0.05
    k_induced: float = 0.06
    c_y_beta: float = -0.98
    roll_beta: float = -0.12
    roll_p: float = -0.26
    roll_r: float = 0.14
    roll_da: float = 0.17
    roll_dr: float = 0.0024
    pitch_0: float = 0.1
    pitch_alpha: float = -1.0
    pitch_q: float = -12.0
    pitch_de: float = -1.1
    yaw_beta: float = 0.073
    yaw_p: float = -0.069
    yaw_r: float = -0.095
    yaw_da: float = -0.011
    yaw_dr: float = -0.069
    airspeed_min: float = 0.5

    def __post_init__(self) -> None:
        require(self.mass > 0.0, "mass", "must be > 0")
        require(self.wing_area > 0.0, "wing_area", "must be > 0")
        require(self.span > 0.0 and self.chord > 0.0, "span", "span and chord must be > 0")
        require(self.rho > 0.0, "rho", "must be > 0")
        try:
            np.linalg.cholesky(self.inertia)
        except np.linalg.LinAlgError as e:
            raise ConfigError("inertia_diag: inertia tensor must be symmetric positive definite") from e
        require(abs(np.linalg.det(self.control_matrix)) > 1e-12, "roll_da", "control derivative matrix is singular")

    @property
    def inertia(self) -> np.ndarray:
        jx, jy, jz = self.inertia_diag
        return np.array([[jx, 0.0, -self.inertia_xz], [0.0, jy, 0.0], [-self.inertia_xz, 0.0, jz]])

    @property
    def control_matrix(self) -> np.ndarray:
        """Moment coefficients per rad of (aileron, elevator, rudder)."""
        return np.array(
            [
                [self.roll_da, 0.0, self.roll_dr],
                [0.0, self.pitch_de, 0.0],
                [self.yaw_da, 0.0, self.yaw_dr],
            ]
        )

    @property
    def reference_lengths(self) -> np.ndarray:
        return np.array([self.span, self.chord, self.span])


@dataclass(frozen=True)
class ActuatorParams:
    bandwidth: float = 35.0
    limits_deg: Tuple[float, float, float] = (20.0, 20.0, 30.0)
    rate_limit_deg: float = 115.0

    def __post_init__(self) -> None:
        require(self.bandwidth > 0.0, "bandwidth", "must be > 0")
        require(all(v > 0.0 for v in self.limits_deg), "limits_deg", "must be > 0")
        require(self.rate_limit_deg > 0.0, "rate_limit_deg", "must be > 0")


@dataclass(frozen=True)
class TetherParams:
    particles: int = 5
    density: float = 0.0046
    diameter: float = 0.0025
    drag_coefficient: float = 1.2
    stiffness: float = 10243.0
    damping: float = 7.8833
    # segment length at which stiffness and damping are quoted
    reference_length: float = 15.0

    def __post_init__(self) -> None:
        require(self.particles >= 1, "particles", "must be >= 1")
        require(self.stiffness > 0.0, "stiffness", "must be > 0")
        require(self.damping >= 0.0, "damping", "must be >= 0")
        require(self.density > 0.0, "density", "must be > 0")
        require(self.diameter >= 0.0, "diameter", "must be >= 0")
        require(self.reference_length > 0.0, "reference_length", "must be > 0")


@dataclass(frozen=True)
class WinchParams:
    inertia: float = 0.08
    friction: float = 0.6
    drum_radius: float = 0.1
    accel_min: float = -5.0
    accel_max: float = 5.0
    speed_min: float = -15.0
    speed_max: float = 20.0
    kp: float = 0.002
    ki: float = 0.05

    def __post_init__(self) -> None:
        require(self.inertia > 0.0, "inertia", "must be > 0")
        require(self.drum_radius > 0.0, "drum_radius", "must be > 0")
        require(self.accel_min < 0.0 < self.accel_max, "accel_min", "limits must bracket zero")
        require(self.speed_min < 0.0 < self.speed_max, "speed_min", "limits must bracket zero")
        require(self.friction >= 0.0, "friction", "must be >= 0")
        require(self.kp >= 0.0 and self.ki >= 0.0, "kp", "gains must be >= 0")


@dataclass(frozen=True)
class PlantParams:
    aircraft: AircraftParams = field(default_factory=AircraftParams)
    actuators: ActuatorParams = field(default_factory=ActuatorParams)
    tether: TetherParams = field(default_factory=TetherParams)
    winch: WinchParams = field(default_factory=WinchParams)


@dataclass(frozen=True, eq=False)
class AircraftState:
    position: np.ndarray
    velocity: np.ndarray
    quaternion: np.ndarray
    rates: np.ndarray


@dataclass(frozen=True, eq=False)
class AircraftDerivative:
    position: np.ndarray
    velocity: np.ndarray
    quaternion: np.ndarray
    rates: np.ndarray


@dataclass(frozen=True, eq=False)
class AeroResult:
    force: np.ndarray
    moment: np.ndarray
    alpha: float
    beta: float
    airspeed: float
    airspeed_b: np.ndarray
    dynamic_pressure: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class ActuatorBank:
    deflection_deg: np.ndarray
    params: ActuatorParams = field(default_factory=ActuatorParams)


@dataclass(frozen=True, eq=False)
class TetherState:
    positions: np.ndarray
    velocities: np.ndarray
    length: float
    length_rate: float = 0.0

    @property
    def node_count(self) -> int:
        # internal nodes plus the aircraft attachment
        return self.positions.shape[0] + 1


@dataclass(frozen=True, eq=False)
class TetherForces:
    nodes: np.ndarray
    aircraft: np.ndarray
    tension_aircraft: float
    tension_ground: float
    tensions: np.ndarray
    collapsed: bool = False


@dataclass(frozen=True)
class WinchState:
    speed: float = 0.0
    integrator: float = 0.0
    acceleration: float = 0.0


@dataclass(frozen=True, eq=False)
class Environment:
    shear: ShearProfile
    gust_w: np.ndarray

    def wind_o(self, points_o: np.ndarray) -> np.ndarray:
        h = np.maximum(-points_o[:, 2], self.shear.z_floor)
        w = np.empty_like(points_o)
        w[:, 0] = self.shear.v_ref * (h / self.shear.z_ref) ** self.shear.exponent + self.gust_w[0]
        w[:, 1] = -self.gust_w[1]
        w[:, 2] = -self.gust_w[2]
        return w


@dataclass(frozen=True, eq=False)
class PlantState:
    time: float
    aircraft: AircraftState
    tether: TetherState
    winch: WinchState
    actuators: ActuatorBank


@dataclass(frozen=True, eq=False)
class ControlInputs:
    deflection_cmd_deg: np.ndarray
    force_set: float
    winch_speed_min: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PlantOutputs:
    aero: AeroResult
    tether: TetherForces
    specific_force_b: np.ndarray
    wind_o: np.ndarray
    finite: bool = True


def base_moment_coefficients(params: AircraftParams, alpha: float, beta: float, rates_hat: np.ndarray) -> np.ndarray:
    p, q, r = rates_hat
    return np.array(
        [
            params.roll_beta * beta + params.roll_p * p + params.roll_r * r,
            params.pitch_0 + params.pitch_alpha * alpha + params.pitch_q * q,
            params.yaw_beta * beta + params.yaw_p * p + params.yaw_r * r,
        ]
    )


def normalized_rates(params: AircraftParams, rates: np.ndarray, airspeed: float) -> np.ndarray:
    return params.reference_lengths * rates / (2.0 * airspeed)


def aero_forces(
    state: AircraftState,
    params: AircraftParams,
    wind_o: np.ndarray,
    deflection_deg: Optional[np.ndarray] = None,
) -> AeroResult:
    r_bo = frames.quat_to_dcm(state.quaternion).T
    v_a = state.velocity - r_bo @ wind_o
    speed = float(np.linalg.norm(v_a))
    if speed <= params.airspeed_min:
        zero = np.zeros(3)
        return AeroResult(zero, zero.copy(), 0.0, 0.0, speed, v_a, 0.0, degenerate=True)
    alpha = math.atan2(v_a[2], v_a[0])
    beta = math.asin(max(-1.0, min(1.0, v_a[1] / speed)))
    x_a = v_a / speed
    lift_dir = np.array([x_a[2], 0.0, -x_a[0]])
    lift_dir /= float(np.linalg.norm(lift_dir)) or 1.0
    c_l = params.c_l0 + params.c_l_alpha * alpha
    c_d = params.c_d0 + params.k_induced * c_l * c_l
    qbar = 0.5 * params.rho * speed * speed
    qs = qbar * params.wing_area
    force = qs * (c_l * lift_dir - c_d * x_a + np.array([0.0, params.c_y_beta * beta, 0.0]))
    coeffs = base_moment_coefficients(params, alpha, beta, normalized_rates(params, state.rates, speed))
    if deflection_deg is not None:
        coeffs = coeffs + params.control_matrix @ np.radians(deflection_deg)
    moment = qs * params.reference_lengths * coeffs
    return AeroResult(force, moment, alpha, beta, speed, v_a, qbar)


def aircraft_derivatives(
    state: AircraftState,
    params: AircraftParams,
    f_a: np.ndarray,
    f_g: np.ndarray,
    f_t: np.ndarray,
    f_p: np.ndarray,
    m_a: np.ndarray,
) -> AircraftDerivative:
    v = state.velocity
    w = state.rates
    j = params.inertia
    f_tot = f_a + f_g + f_t + f_p
    v_dot = -np.cross(w, v) + f_tot / params.mass
    w_dot = -np.linalg.solve(j, np.cross(w, j @ w) - m_a)
    p_dot = frames.quat_to_dcm(state.quaternion) @ v
    q_dot = frames.quat_derivative(state.quaternion, w)
    return AircraftDerivative(p_dot, v_dot, q_dot, w_dot)


def actuator_step(bank: ActuatorBank, commands_deg: np.ndarray, dt: float) -> ActuatorBank:
    p = bank.params
    limits = np.asarray(p.limits_deg)
    cmd = np.clip(np.asarray(commands_deg, dtype=float), -limits, limits)
    max_move = p.rate_limit_deg * dt
    move = np.clip(p.bandwidth * dt * (cmd - bank.deflection_deg), -max_move, max_move)
    return replace(bank, deflection_deg=np.clip(bank.deflection_deg + move, -limits, limits))


def tether_forces(
    tether: TetherState,
    params: TetherParams,
    wind_o: WindField,
    anchor: np.ndarray,
    attach_pos: np.ndarray,
    attach_vel: np.ndarray,
    rho: float = 1.225,
    gravity: float = 9.81,
) -> TetherForces:
    n = params.particles
    pts = np.vstack((anchor[None, :], tether.positions, attach_pos[None, :]))
    vel = np.vstack((np.zeros((1, 3)), tether.velocities, attach_vel[None, :]))
    seg = pts[1:] - pts[:-1]
    lengths = np.sqrt(np.einsum("ij,ij->i", seg, seg))
    if float(lengths.min()) < 1e-6:
        zeros = np.zeros((n - 1, 3))
        return TetherForces(zeros, np.zeros(3), 0.0, 0.0, np.zeros(n), collapsed=True)
    unit = seg / lengths[:, None]
    l0 = tether.length / n
    c_seg = params.stiffness * params.reference_length / l0
    d_seg = params.damping * params.reference_length / l0
    stretch = lengths - l0
    rate = np.einsum("ij,ij->i", vel[1:] - vel[:-1], unit) - tether.length_rate / n
    tension = np.where(stretch > 0.0, np.maximum(c_seg * stretch + d_seg * rate, 0.0), 0.0)
    pull = tension[:, None] * unit

    v_rel = wind_o(0.5 * (pts[1:] + pts[:-1])) - 0.5 * (vel[1:] + vel[:-1])
    v_perp = v_rel - np.einsum("ij,ij->i", v_rel, unit)[:, None] * unit
    speed_perp = np.sqrt(np.einsum("ij,ij->i", v_perp, v_perp))
    drag = (0.5 * rho * params.drag_coefficient * params.diameter) * (lengths * speed_perp)[:, None] * v_perp

    nodes = pull[1:] - pull[:-1] + 0.5 * (drag[1:] + drag[:-1])
    nodes[:, 2] += params.density * tether.length / n * gravity
    aircraft = -pull[-1] + 0.5 * drag[-1]
    return TetherForces(nodes, aircraft, float(tension[-1]), float(tension[0]), tension)


def winch_step(
    winch: WinchState,
    params: WinchParams,
    f_ground: float,
    f_set: float,
    dt: float,
    speed_min: Optional[float] = None,
) -> WinchState:
    """Drum torque balance J*a/r = r*F_ground - torque_motor - friction*v, reel-out positive.

    The motor applies the set-point torque r*f_set less a PI correction on the force error,
    so the tether load and viscous friction both act on the drum.

    `speed_min` is a soft floor (e.g. minimum tether length reached): below it the
    drum is decelerated at the acceleration limit instead of stopping instantly.
    """
    r = params.drum_radius
    error = f_ground - f_set
    u = params.kp * error + params.ki * winch.integrator
    torque_motor = r * f_set - u
    accel_raw = r * (r * f_ground - torque_motor - params.friction * winch.speed) / params.inertia
    accel = min(max(accel_raw, params.accel_min), params.accel_max)
    floored = speed_min is not None and winch.speed + accel * dt < speed_min
    if floored:
        accel = min(params.accel_max, max(params.accel_min, (speed_min - winch.speed) / dt))
    speed = min(max(winch.speed + accel * dt, params.speed_min), params.speed_max)
    accel = (speed - winch.speed) / dt

    pushing_up = accel_raw > params.accel_max or (speed >= params.speed_max and accel_raw > 0.0)
    pushing_down = floored or accel_raw < params.accel_min or (speed <= params.speed_min and accel_raw < 0.0)
    integrator = winch.integrator
    if not ((pushing_up and error > 0.0) or (pushing_down and error < 0.0)):
        integrator += error * dt
    return WinchState(speed=speed, integrator=integrator, acceleration=accel)


def holding_integrator(params: WinchParams, speed: float) -> float:
    """Integrator value that holds `speed` against friction at zero force error."""
    if params.ki == 0.0:
        return 0.0
    return params.friction * speed / params.ki


# Flat state layout for the integrator:
# [p(3), v(3), q(4), omega(3), node positions(3m), node velocities(3m), l_T]

def _pack(state: PlantState) -> np.ndarray:
    a = state.aircraft
    t = state.tether
    return np.concatenate(
        (a.position, a.velocity, a.quaternion, a.rates, t.positions.ravel(), t.velocities.ravel(), [t.length])
    )


def _unpack(y: np.ndarray, m: int) -> Tuple[AircraftState, np.ndarray, np.ndarray, float]:
    aircraft = AircraftState(y[0:3], y[3:6], y[6:10], y[10:13])
    nodes = y[13 : 13 + 3 * m].reshape(m, 3)
    node_vel = y[13 + 3 * m : 13 + 6 * m].reshape(m, 3)
    return aircraft, nodes, node_vel, float(y[-1])


def _evaluate(
    y: np.ndarray,
    params: PlantParams,
    env: Environment,
    deflection_deg: np.ndarray,
    reel_speed: float,
) -> Tuple[np.ndarray, PlantOutputs]:
    ap = params.aircraft
    m = params.tether.particles - 1
    aircraft, nodes, node_vel, length = _unpack(y, m)
    r_ob = frames.quat_to_dcm(aircraft.quaternion)
    r_bo = r_ob.T
    wind_o = env.wind_o(aircraft.position[None, :])[0]
    aero = aero_forces(aircraft, ap, wind_o, deflection_deg)
    tether = TetherState(nodes, node_vel, length, reel_speed)
    tf = tether_forces(
        tether, params.tether, env.wind_o, np.zeros(3), aircraft.position, r_ob @ aircraft.velocity, ap.rho, ap.gravity
    )
    f_g = r_bo @ np.array([0.0, 0.0, ap.mass * ap.gravity])
    f_t = r_bo @ tf.aircraft
    zero = np.zeros(3)
    d = aircraft_derivatives(aircraft, ap, aero.force, f_g, f_t, zero, aero.moment)
    node_mass = params.tether.density * length / params.tether.particles
    node_acc = tf.nodes / node_mass if m > 0 else tf.nodes
    dy = np.concatenate(
        (d.position, d.velocity, d.quaternion, d.rates, node_vel.ravel(), node_acc.ravel(), [reel_speed])
    )
    out = PlantOutputs(
        aero=aero,
        tether=tf,
        specific_force_b=(aero.force + f_g + f_t) / ap.mass,
        wind_o=wind_o,
        finite=bool(np.all(np.isfinite(dy))),
    )
    return dy, out


def plant_outputs(state: PlantState, env: Environment, params: PlantParams) -> Tuple[np.ndarray, PlantOutputs]:
    """Derivative and outputs at `state`; the derivative can seed the next RK4 step."""
    return _evaluate(_pack(state), params, env, state.actuators.deflection_deg, state.winch.speed)


def integrate_step(
    state: PlantState,
    inputs: ControlInputs,
    env: Environment,
    params: PlantParams,
    dt: float,
    start: Optional[Tuple[np.ndarray, PlantOutputs]] = None,
) -> PlantState:
    y0 = _pack(state)
    deflection = state.actuators.deflection_deg
    reel = state.winch.speed
    k1, out = start if start is not None else _evaluate(y0, params, env, deflection, reel)
    k2, _ = _evaluate(y0 + 0.5 * dt * k1, params, env, deflection, reel)
    k3, _ = _evaluate(y0 + 0.5 * dt * k2, params, env, deflection, reel)
    k4, _ = _evaluate(y0 + dt * k3, params, env, deflection, reel)
    y1 = y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    m = params.tether.particles - 1
    aircraft, nodes, node_vel, length = _unpack(y1, m)
    q = aircraft.quaternion / float(np.linalg.norm(aircraft.quaternion))
    winch = winch_step(
        state.winch, params.winch, out.tether.tension_ground, inputs.force_set, dt, inputs.winch_speed_min
    )
    return PlantState(
        time=state.time + dt,
        aircraft=replace(aircraft, quaternion=q),
        tether=TetherState(nodes, node_vel, length, winch.speed),
        winch=winch,
        actuators=actuator_step(state.actuators, inputs.deflection_cmd_deg, dt),
    )


def state_is_finite(state: PlantState) -> bool:
    return bool(np.all(np.isfinite(_pack(state)))) and math.isfinite(state.winch.speed)
