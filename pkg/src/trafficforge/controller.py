"""Lane-tracking controllers and the kinematic bicycle integupdate.

The lateral chain converts a signed lane offset into a lateral speed
command, the heading needed to realize it, a proportional heading rate,
and finally a steering angle for the bicycle model. The longitudinal
command tracks a reference speed but never exceeds the safe car-following
acceleration. Scalar math lives in :mod:`trafficforge.kernels` so the
compiled backend can be swapped in.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from trafficforge import kernels

A_MAX_DECEL = 8.0


@dataclass
class VehicleState:
    """Kinematic state: position, speed, heading, acceleration, steering."""

    position: np.ndarray
    v: float = 0.0
    psi: float = 0.0
    a: float = 0.0
    phi: float = 0.0

    def copy(self):
        return VehicleState(self.position.copy(), self.v, self.psi,
                            self.a, self.phi)


@dataclass
class VehicleGeometry:
    L: float = 4.5
    width: float = 1.8


@dataclass
class ControllerParams:
    kp_lateral: float = 1.0
    kp_heading: float = 2.0
    epsilon: float = 0.0            # per-agent lane-offset noise, meters
    lookahead_time: float = 0.8
    lookahead_min: float = 2.0
    kp_speed: float = 1.0
    phi_max: float = field(default=math.radians(35.0))
    psi_req_max: float = field(default=math.radians(45.0))
    v_eps: float = 0.5
    a_max_decel: float = A_MAX_DECEL

    def validate(self):
        if min(self.kp_lateral, self.kp_heading, self.kp_speed) <= 0:
            raise ValueError("controller gains must be positive")
        if not 0 < self.phi_max < math.pi / 2:
            raise ValueError("phi_max must be in (0, pi/2)")


def lateral_velocity(kp_lateral, x_lateral, epsilon):
    """v_lateral command; positive offsets (left of lane) steer right."""
    return kernels.lateral_velocity(kp_lateral, x_lateral, epsilon)


def required_heading(v, v_lateral, v_eps=0.5,
                     psi_req_max=math.radians(45.0)):
    """arcsin(v_lateral / v) with a low-speed floor and saturation."""
    return kernels.required_heading(v, v_lateral, v_eps, psi_req_max)


def heading_rate(kp_heading, psi_future, psi_req, psi_current):
    """Rate command from the wrapped error (psi_future + psi_req - psi)."""
    return kernels.heading_rate(kp_heading, psi_future, psi_req, psi_current)


def steering_from_rate(L, v, psi_dot, v_eps=0.5,
                       phi_max=math.radians(35.0)):
    """phi = arctan(L * psi_dot / v), floored at v_eps, clamped at phi_max."""
    return kernels.steering_from_rate(L, v, psi_dot, v_eps, phi_max)


def longitudinal_command(v, v_ref, kp_speed, a_idm,
                         a_max_decel=A_MAX_DECEL, a_cap=math.inf):
    """min(kp * (v_ref - v), a_idm); the safety ceiling is absolute.

    ``a_cap`` is the comfort limit (the caller usually passes the agent's
    comfortable acceleration; the IDM value already respects it).
    """
    return kernels.longitudinal_command(v, v_ref, kp_speed, a_idm,
                                        a_max_decel, a_cap)


def step_kinematics(state, a_cmd, phi, geom, dt):
    """Forward-Euler bicycle step; returns a new VehicleState.

    Speed is floored at zero, position advances along the pre-update
    heading, and the applied (a, phi) are stored on the new state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, v, psi = kernels.step_kinematics(
        float(state.position[0]), float(state.position[1]),
        state.v, state.psi, a_cmd, phi, geom.L, dt)
    return VehicleState(np.array([x, y]), v, psi, a_cmd, phi)
