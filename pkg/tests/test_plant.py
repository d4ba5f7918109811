import math

import numpy as np
import pytest

from kiteupset.closedloop import trim_state
from kiteupset.config import CampaignConfig
from kiteupset.errors import ConfigError
from kiteupset.plant import (
    ActuatorBank,
    ActuatorParams,
    AircraftParams,
    AircraftState,
    ControlInputs,
    Environment,
    TetherParams,
    TetherState,
    WinchParams,
    WinchState,
    actuator_step,
    holding_integrator,
    aero_forces,
    aircraft_derivatives,
    integrate_step,
    plant_outputs,
    tether_forces,
    winch_step,
)
from kiteupset.windfield import ShearProfile

ZERO = np.zeros(3)
LEVEL = np.array([1.0, 0.0, 0.0, 0.0])


def _aircraft(velocity=(30.0, 0.0, 0.0), rates=(0.0, 0.0, 0.0)):
    return AircraftState(np.zeros(3), np.array(velocity, dtype=float), LEVEL.copy(), np.array(rates, dtype=float))


def _still_air(points):
    return np.zeros_like(points)


def test_derivatives_at_rest_only_kinematics():
    params = AircraftParams()
    state = _aircraft(velocity=(5.0, 0.0, 1.0))
    d = aircraft_derivatives(state, params, ZERO, ZERO, ZERO, ZERO, ZERO)
    assert np.allclose(d.velocity, 0.0)
    assert np.allclose(d.rates, 0.0)
    assert np.allclose(d.position, [5.0, 0.0, 1.0])


def test_derivatives_newton():
    params = AircraftParams()
    d = aircraft_derivatives(_aircraft(velocity=(0.0, 0.0, 0.0)), params, np.array([params.mass * 2.0, 0, 0]), ZERO, ZERO, ZERO, ZERO)
    assert np.allclose(d.velocity, [2.0, 0.0, 0.0])


def test_derivatives_gyroscopic_term():
    params = AircraftParams(inertia_diag=(1.0, 2.0, 3.0))
    d = aircraft_derivatives(_aircraft(rates=(1.0, 1.0, 0.0)), params, ZERO, ZERO, ZERO, ZERO, ZERO)
    assert np.allclose(d.rates, [0.0, 0.0, -1.0 / 3.0])


def test_zero_relative_flow_is_degenerate():
    state = _aircraft(velocity=(10.0, 0.0, 0.0))
    aero = aero_forces(state, AircraftParams(), np.array([10.0, 0.0, 0.0]))
    assert aero.degenerate
    assert np.all(aero.force == 0.0)


def test_drag_only_at_zero_lift():
    params = AircraftParams(c_l0=0.0, c_d0=0.05, k_induced=0.06, rho=1.0, wing_area=2.0)
    aero = aero_forces(_aircraft(velocity=(10.0, 0.0, 0.0)), params, ZERO)
    # qbar * S = 0.5 * 1 * 100 * 2 = 100
    assert aero.dynamic_pressure * params.wing_area == pytest.approx(100.0)
    assert np.allclose(aero.force, [-5.0, 0.0, 0.0])


def test_doubling_airspeed_quadruples_forces():
    params = AircraftParams()
    slow = aero_forces(_aircraft(velocity=(20.0, 0.0, 2.0)), params, ZERO)
    fast = aero_forces(_aircraft(velocity=(40.0, 0.0, 4.0)), params, ZERO)
    assert fast.alpha == pytest.approx(slow.alpha)
    assert fast.dynamic_pressure == pytest.approx(4.0 * slow.dynamic_pressure)
    assert np.allclose(fast.force, 4.0 * slow.force)


def test_actuator_holds_when_command_equals_state():
    bank = ActuatorBank(np.array([3.0, -2.0, 1.0]))
    assert np.array_equal(actuator_step(bank, np.array([3.0, -2.0, 1.0]), 0.01).deflection_deg, bank.deflection_deg)


def test_actuator_settles_at_deflection_limit():
    bank = ActuatorBank(np.zeros(3))
    for _ in range(500):
        bank = actuator_step(bank, np.array([90.0, 0.0, 0.0]), 0.01)
    assert bank.deflection_deg[0] == pytest.approx(20.0)


def test_actuator_rate_limited_step():
    bank = actuator_step(ActuatorBank(np.zeros(3), ActuatorParams(bandwidth=35.0)), np.array([20.0, 0.0, 0.0]), 0.01)
    assert bank.deflection_deg[0] == pytest.approx(1.15)


def _single_segment(length_to_attach, rest=15.0):
    params = TetherParams(particles=1, diameter=0.0)
    tether = TetherState(np.zeros((0, 3)), np.zeros((0, 3)), rest)
    return tether_forces(tether, params, _still_air, np.zeros(3), np.array([length_to_attach, 0.0, 0.0]), np.zeros(3))


def test_unstretched_tether_carries_no_force():
    forces = _single_segment(15.0)
    assert forces.tension_aircraft == pytest.approx(0.0, abs=1e-9)
    assert forces.tension_ground == pytest.approx(0.0, abs=1e-9)


def test_stretched_segment_spring_force():
    forces = _single_segment(15.01)
    assert forces.tension_aircraft == pytest.approx(102.43, rel=1e-6)
    assert np.allclose(forces.aircraft, [-102.43, 0.0, 0.0], rtol=1e-6)


def test_compressed_tether_does_not_push():
    forces = _single_segment(14.0)
    assert forces.tension_aircraft == 0.0
    assert np.allclose(forces.aircraft, 0.0)


def test_collapsed_segment_flagged():
    forces = _single_segment(0.0)
    assert forces.collapsed


def test_winch_idle_at_zero_error():
    state = winch_step(WinchState(), WinchParams(), 1600.0, 1600.0, 0.01)
    assert state.acceleration == pytest.approx(0.0)
    assert state.speed == pytest.approx(0.0)


def test_winch_torque_balance_includes_friction_and_load():
    frictionless = WinchParams(friction=0.0)
    damped = WinchParams(friction=0.6)
    slow = winch_step(WinchState(speed=5.0), frictionless, 1601.0, 1600.0, 0.01)
    braked = winch_step(WinchState(speed=5.0), damped, 1601.0, 1600.0, 0.01)
    r, j = damped.drum_radius, damped.inertia
    assert slow.acceleration == pytest.approx(r * (r * 1.0 + damped.kp * 1.0) / j)
    assert braked.acceleration == pytest.approx(r * (r * 1.0 + damped.kp * 1.0 - 0.6 * 5.0) / j)
    assert braked.acceleration < slow.acceleration

    light = winch_step(WinchState(), frictionless, 1602.0, 1600.0, 0.01)
    heavy = winch_step(WinchState(), frictionless, 1604.0, 1600.0, 0.01)
    assert heavy.acceleration > light.acceleration > 0.0


def test_holding_integrator_keeps_reel_speed():
    params = WinchParams()
    state = WinchState(speed=5.0, integrator=holding_integrator(params, 5.0))
    nxt = winch_step(state, params, 1600.0, 1600.0, 0.01)
    assert nxt.acceleration == pytest.approx(0.0, abs=1e-9)
    assert nxt.speed == pytest.approx(5.0)
    assert holding_integrator(WinchParams(ki=0.0), 5.0) == 0.0


def test_winch_acceleration_limited():
    params = WinchParams()
    state = winch_step(WinchState(), params, 5000.0, 1000.0, 0.01)
    assert state.acceleration == pytest.approx(params.accel_max)


def test_winch_speed_limited():
    params = WinchParams()
    state = winch_step(WinchState(speed=20.0), params, 5000.0, 1000.0, 0.01)
    assert state.speed == 20.0


def test_winch_params_validated():
    with pytest.raises(ConfigError):
        WinchParams(drum_radius=0.0)
    with pytest.raises(ConfigError):
        TetherParams(stiffness=-1.0)


def _advance(cfg, dt, duration):
    plant, _, _ = trim_state(cfg)
    env = Environment(cfg.wind.shear, np.zeros(3))
    inputs = ControlInputs(np.zeros(3), cfg.guidance.force_traction)
    for _ in range(int(round(duration / dt))):
        plant = integrate_step(plant, inputs, env, cfg.plant, dt)
    return plant


def test_integration_self_convergence():
    cfg = CampaignConfig()
    coarse = _advance(cfg, 0.01, 1.0)
    fine = _advance(cfg, 0.005, 1.0)
    a, b = coarse.aircraft.position, fine.aircraft.position
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-4


def test_integration_is_deterministic():
    cfg = CampaignConfig()
    a = _advance(cfg, 0.01, 0.2)
    b = _advance(cfg, 0.01, 0.2)
    assert np.array_equal(a.aircraft.position, b.aircraft.position)
    assert np.array_equal(a.tether.positions, b.tether.positions)


def test_trim_state_pulls_near_traction_set_point():
    cfg = CampaignConfig()
    plant, _, _ = trim_state(cfg)
    _, out = plant_outputs(plant, Environment(cfg.wind.shear, np.zeros(3)), cfg.plant)
    assert out.finite
    assert not out.aero.degenerate
    assert 0.0 < out.tether.tension_aircraft < cfg.simulation.rupture_force
