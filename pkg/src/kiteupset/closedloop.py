"""One pumping cycle from a noise vector, its run log, and the limit function."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import frames
from .control import (
    ControllerState,
    cascade_step,
    desired_direction_line,
    desired_direction_path,
    guidance_command,
    measure_attitude,
)
from .errors import ConfigError, require
from .guidance import (
    RETRACTION,
    TRACTION,
    TRANSITION,
    GuidanceCommand,
    GuidanceState,
    arc_gap,
    avoidance_step,
    closest_point_newton,
    crossed_mark,
    filter_force,
    path_derivatives,
    path_point_W,
    retraction_trigger,
    transition_filter_step,
)
from .io import read_records, short_hash, write_records
from .plant import (
    ActuatorBank,
    AircraftState,
    ControlInputs,
    Environment,
    PlantOutputs,
    PlantState,
    TetherState,
    WinchState,
    holding_integrator,
    integrate_step,
    plant_outputs,
    state_is_finite,
)
from .subsim import Evaluation
from .windfield import NoiseSeedVector, gust_series, seed_dimension, wind_at

if TYPE_CHECKING:
    from .config import CampaignConfig

LOGGER = logging.getLogger(__name__)

RUNLOG_SCHEMA = "runlog/1"

COMPLETED = "completed"
RUPTURE = "rupture"
INVALID = "invalid"
TIMEOUT = "timeout"

MODE_CODES = {"traction": 0, "retraction": 1, "transition": 2, "avoidance": 3}

PREDICTOR_SIGNALS = ("v_w_x", "v_w_y", "v_w_z", "a_z_tau", "F_t", "alpha", "e_p")

SIGNALS = PREDICTOR_SIGNALS + (
    "F_t_ground",
    "F_t_set",
    "v_W",
    "a_W",
    "a_W_peak",
    "l_T",
    "v_a",
    "beta",
    "mu_a",
    "mu_set",
    "alpha_set",
    "delta_a",
    "delta_e",
    "delta_r",
    "delta_rate_peak",
    "x",
    "y",
    "z",
    "s",
    "phi_r",
    "mode",
    "y_hat",
    "saturated",
    "newton_fallback",
)

# history of measured rows -> predicted class (1 nominal, -1 upset ahead)
Predictor = Callable[[Sequence[Dict[str, float]]], int]


@dataclass(frozen=True)
class SimulationParams:
    t_sim: float = 300.0
    f_s: float = 10.0
    f_int: float = 100.0
    channels: int = 3
    rupture_force: float = 2000.0
    trim_lift_coefficient: float = 0.8

    def __post_init__(self) -> None:
        require(self.t_sim > 0.0, "t_sim", "must be > 0")
        require(self.f_s > 0.0, "f_s", "must be > 0")
        require(self.f_int >= self.f_s, "f_int", "must be >= f_s")
        ratio = self.f_int / self.f_s
        require(abs(ratio - round(ratio)) < 1e-9, "f_int", "must be an integer multiple of f_s")
        require(self.channels == 3, "channels", "the gust model uses exactly 3 channels")
        require(self.rupture_force > 0.0, "rupture_force", "must be > 0")
        require(self.trim_lift_coefficient > 0.0, "trim_lift_coefficient", "must be > 0")

    @property
    def substeps(self) -> int:
        return int(round(self.f_int / self.f_s))

    @property
    def dimension(self) -> int:
        return seed_dimension(self.t_sim, self.f_s, self.channels)


@dataclass(frozen=True)
class LimitFunction:
    name: str = "max_tether_force"
    signal: str = "F_t"
    critical: float = 2000.0
    penalty: float = 1000.0

    def __post_init__(self) -> None:
        require(bool(self.signal), "signal", "must name a run-log signal")
        require(self.penalty >= 0.0, "penalty", "must be >= 0")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"t": self.t, "kind": self.kind, "detail": dict(self.detail)}


@dataclass
class RunLog:
    times: np.ndarray
    signals: Dict[str, np.ndarray]
    events: List[Event]
    outcome: str
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.times.size)

    def first_event(self, kind: str) -> Optional[Event]:
        for ev in self.events:
            if ev.kind == kind:
                return ev
        return None


def _theta_key(samples: np.ndarray) -> str:
    return short_hash(np.ascontiguousarray(samples, dtype=np.float64).tobytes())


def trim_state(cfg: "CampaignConfig") -> Tuple[PlantState, GuidanceState, ControllerState]:
    """Aircraft on the traction path at s = 0, lift balancing the traction set point."""
    ap, tp, shape, gp = cfg.aircraft, cfg.tether, cfg.path, cfg.guidance
    force = gp.force_traction
    l0 = gp.length_initial
    distance = l0 * (1.0 + force / (tp.stiffness * tp.reference_length))
    c, dc, _ = path_derivatives(0.0, shape, shape.phi_set)
    pos_w = distance * c
    tangent_w = frames.unit(dc - float(dc @ c) * c)
    wind_w = wind_at(cfg.wind.shear, np.zeros(3), float(pos_w[2]))

    c_l = cfg.simulation.trim_lift_coefficient
    c_d = ap.c_d0 + ap.k_induced * c_l * c_l
    glide = c_l / c_d
    w_r = float(wind_w @ c)
    reel = w_r - math.sqrt(force / (0.5 * ap.rho * ap.wing_area * math.hypot(c_l, c_d) * (1.0 + glide * glide)))
    reel = min(max(reel, 0.0), cfg.winch.speed_max)
    v_t = max((w_r - reel) * glide, 10.0)
    vel_w = v_t * tangent_w + reel * c

    x_a = frames.unit(vel_w - wind_w)
    z_a = -frames.unit(c - float(c @ x_a) * x_a)
    alpha = (c_l - ap.c_l0) / ap.c_l_alpha
    x_b = math.cos(alpha) * x_a - math.sin(alpha) * z_a
    z_b = math.sin(alpha) * x_a + math.cos(alpha) * z_a
    y_b = np.cross(z_b, x_b)
    r_ob = np.column_stack([frames.w_to_o(x_b), frames.w_to_o(y_b), frames.w_to_o(z_b)])
    q = frames.dcm_to_quat(r_ob)
    pos_o = frames.w_to_o(pos_w)
    vel_o = frames.w_to_o(vel_w)
    aircraft = AircraftState(pos_o, r_ob.T @ vel_o, q, np.zeros(3))

    n = tp.particles
    frac = (np.arange(1, n) / n)[:, None]
    tether = TetherState(frac * pos_o, frac * vel_o, l0, reel)
    plant = PlantState(
        time=0.0,
        aircraft=aircraft,
        tether=tether,
        winch=WinchState(speed=reel, integrator=holding_integrator(cfg.winch, reel)),
        actuators=ActuatorBank(np.zeros(3), cfg.actuators),
    )
    guid = GuidanceState(
        phase=TRACTION,
        s=0.0,
        phi_r=shape.phi_set,
        force_set=force,
        force_target=force,
        length_at_mark=l0,
    )
    ctrl = ControllerState(mu_ref=0.0, alpha_ref=alpha)
    return plant, guid, ctrl


@dataclass
class _Tick:
    guid: GuidanceState
    command: GuidanceCommand
    e_p: float
    fallback: bool
    y_hat: int
    events: List[Tuple[str, Dict[str, Any]]]
    completed: bool


def _measured(plant: PlantState, out: PlantOutputs) -> Dict[str, float]:
    r_ob = frames.quat_to_dcm(plant.aircraft.quaternion)
    pos_o = plant.aircraft.position
    wind_w = frames.o_to_w(out.wind_o)
    accel_o = r_ob @ out.specific_force_b
    return {
        "v_w_x": float(wind_w[0]),
        "v_w_y": float(wind_w[1]),
        "v_w_z": float(wind_w[2]),
        "a_z_tau": -float(accel_o @ frames.unit(pos_o)),
        "F_t": out.tether.tension_aircraft,
        "alpha": out.aero.alpha,
    }


def _guidance_tick(
    plant: PlantState,
    out: PlantOutputs,
    guid: GuidanceState,
    cfg: "CampaignConfig",
    history: List[Dict[str, float]],
    measured: Dict[str, float],
    predictor: Optional[Predictor],
    avoidance: bool,
    dt: float,
) -> _Tick:
    shape, gp = cfg.path, cfg.guidance
    pos_w = frames.o_to_w(plant.aircraft.position)
    r = float(np.linalg.norm(pos_w))
    p_hat = pos_w / r
    length = plant.tether.length
    events: List[Tuple[str, Dict[str, Any]]] = []
    fallback = False
    completed = False

    if guid.phase == RETRACTION:
        start, end = guid.glide_start, guid.glide_end
        u = frames.unit(end - start)
        rel = pos_w - start
        e_p = float(np.linalg.norm(rel - float(rel @ u) * u))
        guid = filter_force(guid, gp.avoidance_bandwidth, dt)
        if float((pos_w - end) @ u) >= 0.0 or length <= gp.length_min:
            s_new, _ = closest_point_newton(p_hat, shape, shape.phi_0, None)
            guid = replace(
                guid,
                phase=TRANSITION,
                s=s_new,
                phi_r=shape.phi_0,
                force_target=gp.force_traction,
                glide_start=None,
                glide_end=None,
            )
            events.append(("transition", {"l_T": length}))
    else:
        s_new, fallback = closest_point_newton(p_hat, shape, guid.phi_r, guid.s)
        target = path_point_W(s_new, shape, guid.phi_r)
        e_p = r * math.acos(min(1.0, max(-1.0, float(p_hat @ target))))
        if guid.phase == TRACTION:
            mark = crossed_mark(guid.s, s_new)
            if retraction_trigger(guid, s_new, length, gp):
                end = path_point_W(mark, shape, shape.phi_0) * gp.retraction_radius
                guid = replace(
                    guid,
                    phase=RETRACTION,
                    s=s_new,
                    glide_start=pos_w.copy(),
                    glide_end=end,
                    force_target=gp.force_retraction,
                )
                events.append(("retraction", {"l_T": length, "s": mark}))
            elif mark is not None:
                guid = replace(
                    guid, s=s_new, half_eight_increment=length - guid.length_at_mark, length_at_mark=length
                )
            else:
                guid = replace(guid, s=s_new)
        else:
            phi_r = transition_filter_step(guid.phi_r, shape, arc_gap(pos_w, target), dt)
            guid = replace(guid, s=s_new, phi_r=phi_r)
            if guid.avoidance is None:
                guid = filter_force(guid, gp.transition_bandwidth, dt)
            if phi_r - shape.phi_set <= gp.transition_done and guid.avoidance is None:
                completed = True
                events.append(("cycle_complete", {"l_T": length}))

    measured["e_p"] = e_p
    history.append(measured)
    y_hat = 1
    if predictor is not None and guid.phase != RETRACTION:
        y_hat = int(predictor(history))
    if avoidance and guid.phase != RETRACTION:
        guid, event = avoidance_step(guid, y_hat, out.tether.tension_aircraft, gp, dt)
        if event is not None:
            events.append((event, {"F_t": out.tether.tension_aircraft}))

    if guid.phase == RETRACTION:
        direction = desired_direction_line(pos_w, guid.glide_start, guid.glide_end, cfg.control.lookahead)
    else:
        direction = desired_direction_path(pos_w, guid.s, shape, guid.phi_r, cfg.control.lookahead)
    command = guidance_command(plant.aircraft, out.aero, direction, guid.force_set, cfg.aircraft, cfg.control, gp)
    return _Tick(guid, command, e_p, fallback, y_hat, events, completed)


def _row(
    t: float,
    plant: PlantState,
    out: PlantOutputs,
    measured: Dict[str, float],
    tick: _Tick,
    peaks: Tuple[float, float],
) -> Dict[str, float]:
    pos_w = frames.o_to_w(plant.aircraft.position)
    att = measure_attitude(plant.aircraft, out.aero)
    d = plant.actuators.deflection_deg
    row: Dict[str, float] = {"t": t}
    row.update(measured)
    row.update(
        {
            "e_p": tick.e_p,
            "F_t_ground": out.tether.tension_ground,
            "F_t_set": tick.guid.force_set,
            "v_W": plant.winch.speed,
            "a_W": plant.winch.acceleration,
            "a_W_peak": peaks[1],
            "l_T": plant.tether.length,
            "v_a": out.aero.airspeed,
            "beta": att.beta,
            "mu_a": att.mu,
            "mu_set": tick.command.mu_set,
            "alpha_set": tick.command.alpha_set,
            "delta_a": float(d[0]),
            "delta_e": float(d[1]),
            "delta_r": float(d[2]),
            "delta_rate_peak": peaks[0],
            "x": float(pos_w[0]),
            "y": float(pos_w[1]),
            "z": float(pos_w[2]),
            "s": tick.guid.s,
            "phi_r": tick.guid.phi_r,
            "mode": MODE_CODES[tick.guid.mode],
            "y_hat": tick.y_hat,
            "saturated": int(tick.command.saturated),
            "newton_fallback": int(tick.fallback),
        }
    )
    return row


def _failure_kind(plant: PlantState, out: PlantOutputs) -> Optional[str]:
    if not out.finite or not state_is_finite(plant):
        return "numerical_failure"
    if out.tether.collapsed:
        return "node_collapse"
    if out.aero.degenerate:
        return "degenerate_airflow"
    return None


def run_pumping_cycle(
    theta: NoiseSeedVector,
    cfg: "CampaignConfig",
    predictor: Optional[Predictor] = None,
    avoidance: bool = True,
) -> RunLog:
    sim = cfg.simulation
    if theta.samples.size != sim.dimension or theta.channels != sim.channels:
        raise ConfigError(
            f"noise vector: expected {sim.dimension} samples over {sim.channels} channels, "
            f"got {theta.samples.size} over {theta.channels}"
        )
    dt_s = 1.0 / sim.f_s
    dt = dt_s / sim.substeps
    gusts = gust_series(cfg.wind.dryden, dt_s, theta.as_matrix())
    params = cfg.plant
    plant, guid, ctrl = trim_state(cfg)

    rows: List[Dict[str, float]] = []
    events: List[Event] = []
    history: List[Dict[str, float]] = []
    outcome = TIMEOUT
    peaks = (0.0, 0.0)

    for k in range(theta.n_steps):
        t = k * dt_s
        env = Environment(cfg.wind.shear, gusts[k])
        start = plant_outputs(plant, env, params)
        out = start[1]
        failure = _failure_kind(plant, out)
        if failure is not None:
            events.append(Event(t, failure))
            outcome = INVALID
            break

        measured = _measured(plant, out)
        tick = _guidance_tick(plant, out, guid, cfg, history, measured, predictor, avoidance, dt_s)
        guid = tick.guid
        for kind, detail in tick.events:
            events.append(Event(t, kind, detail))
        rows.append(_row(t, plant, out, measured, tick, peaks))

        if out.tether.tension_aircraft > sim.rupture_force:
            events.append(Event(t, "rupture", {"F_t": out.tether.tension_aircraft}))
            outcome = RUPTURE
            break
        if tick.completed:
            outcome = COMPLETED
            break

        speed_floor = 0.0 if plant.tether.length <= cfg.guidance.length_min else None
        rate_peak = 0.0
        accel_peak = 0.0
        terminal: Optional[str] = None
        for j in range(sim.substeps):
            if j > 0:
                start = plant_outputs(plant, env, params)
                out = start[1]
                terminal = _failure_kind(plant, out)
                if terminal is None and out.tether.tension_aircraft > sim.rupture_force:
                    terminal = "rupture"
                if terminal is not None:
                    break
            ctrl, surf = cascade_step(
                plant.aircraft,
                out.aero,
                out.specific_force_b,
                tick.command,
                ctrl,
                cfg.control,
                cfg.aircraft,
                cfg.actuators.limits_deg,
                dt,
            )
            before = plant.actuators.deflection_deg
            plant = integrate_step(
                plant,
                ControlInputs(surf.deflection_deg, guid.force_set, speed_floor),
                env,
                params,
                dt,
                start,
            )
            rate_peak = max(rate_peak, float(np.max(np.abs(plant.actuators.deflection_deg - before))) / dt)
            accel_peak = max(accel_peak, abs(plant.winch.acceleration))
        peaks = (rate_peak, accel_peak)

        if terminal == "rupture":
            t_next = (k + 1) * dt_s
            measured = _measured(plant, out)
            measured["e_p"] = tick.e_p
            rows.append(_row(t_next, plant, out, measured, replace(tick, events=[]), peaks))
            events.append(Event(t_next, "rupture", {"F_t": out.tether.tension_aircraft}))
            outcome = RUPTURE
            break
        if terminal is not None:
            events.append(Event((k + 1) * dt_s, terminal))
            outcome = INVALID
            break

    if not rows and outcome != INVALID:
        raise ConfigError("run produced no samples; check the initial condition")
    names = ("t",) + SIGNALS
    times = np.array([row["t"] for row in rows], dtype=float)
    signals = {name: np.array([row[name] for row in rows], dtype=float) for name in SIGNALS}
    meta = {
        "schema": RUNLOG_SCHEMA,
        "config_hash": cfg.hash,
        "theta_key": _theta_key(theta.samples),
        "f_s": sim.f_s,
        "signals": list(names),
    }
    return RunLog(times, signals, events, outcome, meta)


def evaluate_limit(log: RunLog, lf: LimitFunction) -> Evaluation:
    """Maximum of the limit signal; invalid runs get the penalized value."""
    if log.outcome == INVALID:
        return Evaluation(lf.critical + lf.penalty, True)
    if len(log) == 0:
        raise ValueError("cannot evaluate a limit function on an empty run log")
    if lf.signal not in log.signals:
        raise KeyError(f"run log has no signal {lf.signal!r}")
    return Evaluation(float(np.max(log.signals[lf.signal])), False)


def first_upset_index(log: RunLog, lf: LimitFunction) -> Optional[int]:
    values = log.signals.get(lf.signal)
    if values is None or values.size == 0:
        return None
    hits = np.flatnonzero(values >= lf.critical)
    return int(hits[0]) if hits.size else None


def average_cycle_power(log: RunLog) -> float:
    """Mean winch power in kW; reel-in under tension counts negative."""
    if log.outcome != COMPLETED:
        raise ValueError(f"average cycle power needs a completed run, got outcome {log.outcome!r}")
    power = log.signals["F_t_ground"] * log.signals["v_W"]
    return float(np.mean(power)) / 1000.0


def max_cross_track(log: RunLog, mode: str = "traction") -> float:
    mask = log.signals["mode"] == MODE_CODES[mode]
    if not np.any(mask):
        return 0.0
    return float(np.max(log.signals["e_p"][mask]))


def save_run_log(path: str | Path, log: RunLog, extra: Optional[Dict[str, Any]] = None) -> None:
    path = Path(path)
    header: Dict[str, Any] = {"outcome": log.outcome}
    header.update(log.meta)
    header.update(extra or {})
    names = list(log.signals)
    rows = (
        {"t": float(log.times[i]), **{name: float(log.signals[name][i]) for name in names}}
        for i in range(len(log))
    )
    write_records(path, rows, header=header)
    write_records(events_path(path), (ev.to_dict() for ev in log.events))


def events_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".events.jsonl")


def load_run_log(path: str | Path) -> RunLog:
    path = Path(path)
    header, body = read_records(path, header=True)
    outcome = str(header.pop("outcome"))
    names = [n for n in header.get("signals", []) if n != "t"]
    times = np.array([float(r["t"]) for r in body])
    signals = {n: np.array([float(r[n]) for r in body]) for n in names}
    events: List[Event] = []
    ev_path = events_path(path)
    if ev_path.exists():
        events = [Event(float(e["t"]), str(e["kind"]), dict(e.get("detail", {}))) for e in read_records(ev_path)[1]]
    return RunLog(times, signals, events, outcome, header)


@dataclass(frozen=True)
class CycleObjective:
    """Picklable theta -> limit value map used by subset simulation."""

    cfg: "CampaignConfig"

    def __call__(self, samples: np.ndarray) -> Evaluation:
        sim = self.cfg.simulation
        log = run_pumping_cycle(NoiseSeedVector(np.asarray(samples, dtype=float), sim.channels, sim.f_s), self.cfg)
        return evaluate_limit(log, self.cfg.limit)


def theta_key(samples: np.ndarray) -> str:
    return _theta_key(samples)
