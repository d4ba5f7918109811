"""Frame conventions and small rotation helpers.

O: ground-fixed, x along the mean wind, z down. W: x along the mean wind, z up.
B: body axes (x forward, y right wing, z down). K: kinematic frame from course and
flight-path angle. Quaternions are (w, x, y, z) and rotate B into O.
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np

_W_FROM_O = np.diag([1.0, -1.0, -1.0])
DOWN_O = np.array([0.0, 0.0, 1.0])


def o_to_w(v: np.ndarray) -> np.ndarray:
    return _W_FROM_O @ v


def w_to_o(v: np.ndarray) -> np.ndarray:
    return _W_FROM_O @ v


def quat_to_dcm(q: np.ndarray) -> np.ndarray:
    """Rotation matrix R_OB with v_O = R_OB @ v_B."""
    w, x, y, z = q
    return np.array(
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    )


def dcm_to_quat(r: np.ndarray) -> np.ndarray:
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_derivative(q: np.ndarray, omega_b: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    p, qq, r = omega_b
    return 0.5 * np.array(
        [
            -x * p - y * qq - z * r,
            w * p + y * r - z * qq,
            w * qq - x * r + z * p,
            w * r + x * qq - y * p,
        ]
    )


def kinematic_dcm(chi: float, gamma: float) -> np.ndarray:
    """M_KO: rows are the K axes expressed in O."""
    cc, sc = math.cos(chi), math.sin(chi)
    cg, sg = math.cos(gamma), math.sin(gamma)
    return np.array(
        [
            [cg * cc, cg * sc, -sg],
            [-sc, cc, 0.0],
            [sg * cc, sg * sc, cg],
        ]
    )


def course_and_path_angle(v_o: np.ndarray) -> Tuple[float, float]:
    chi = math.atan2(v_o[1], v_o[0])
    gamma = math.atan2(-v_o[2], math.hypot(v_o[0], v_o[1]))
    return chi, gamma


def elevation(v_w: np.ndarray) -> float:
    """Angle between a W vector and the x_W y_W plane; pi/2 straight up."""
    return math.atan2(v_w[2], math.hypot(v_w[0], v_w[1]))


def wrap_pi(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def aero_bank_angle(r_ob: np.ndarray, v_a_b: np.ndarray) -> float:
    """Bank of the lift plane about the airspeed vector, zero when lift points up."""
    x_a_b = unit(v_a_b)
    z_a_b = unit(np.cross(x_a_b, np.array([0.0, 1.0, 0.0])))
    x_a = r_ob @ x_a_b
    z_a = r_ob @ z_a_b
    z_ref = DOWN_O - float(DOWN_O @ x_a) * x_a
    if float(np.linalg.norm(z_ref)) < 1e-9:
        return 0.0
    z_ref = unit(z_ref)
    y_ref = np.cross(z_ref, x_a)
    return math.atan2(-float(z_a @ y_ref), float(z_a @ z_ref))
