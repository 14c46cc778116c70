"""Pure-Python scalar kernels for the per-step simulation math.

This is the fallback backend for :mod:`trafficforge.kernels`. The compiled
backend (``_corekernels.pyx``) implements the same functions with the same
operation order on C doubles, so both produce bit-identical results.
"""

import math

BACKEND = "python"

_TWO_PI = 6.283185307179586476925287


def wrap_angle(theta):
    """Wrap an angle to the interval (-pi, pi]."""
    t = math.fmod(theta + math.pi, _TWO_PI)
    if t <= 0.0:
        t += _TWO_PI
    return t - math.pi


def desired_gap(s0, T, a, b, v, dv):
    """Desired minimum gap: s0 plus the speed- and approach-dependent term.

    The dynamic part v*T + v*dv / (2*sqrt(a*b)) is floored at zero so an
    opening gap never shrinks the requirement below the standstill distance.
    """
    dyn = v * T + v * dv / (2.0 * math.sqrt(a * b))
    if dyn < 0.0:
        dyn = 0.0
    return s0 + dyn


def idm_accel(a, b, v0, delta, T, s0, v, gap, dv, a_max_decel):
    """Car-following acceleration from speed, gap and closing speed.

    ``gap`` is bumper-to-bumper distance; pass ``math.inf`` for a free road
    (the interaction term vanishes). A non-positive gap is treated as an
    emergency and returns the full deceleration clamp. Output is clamped to
    [-a_max_decel, a].
    """
    if gap <= 0.0:
        return -a_max_decel
    sstar = desired_gap(s0, T, a, b, v, dv)
    ratio = sstar / gap
    acc = a * (1.0 - (v / v0) ** delta - ratio * ratio)
    if acc < -a_max_decel:
        acc = -a_max_decel
    elif acc > a:
        acc = a
    return acc


def lateral_velocity(kp_lateral, x_lateral, epsilon):
    """Corrective lateral speed command from the signed lane offset."""
    return -kp_lateral * (x_lateral + epsilon)


def required_heading(v, v_lateral, v_eps, psi_req_max):
    """Heading correction needed to realize the lateral speed command."""
    vv = v if v > v_eps else v_eps
    ratio = v_lateral / vv
    if ratio > 1.0:
        ratio = 1.0
    elif ratio < -1.0:
        ratio = -1.0
    psi = math.asin(ratio)
    if psi > psi_req_max:
        psi = psi_req_max
    elif psi < -psi_req_max:
        psi = -psi_req_max
    return psi


def heading_rate(kp_heading, psi_future, psi_req, psi_current):
    """Proportional heading-rate command from the wrapped heading error."""
    return kp_heading * wrap_angle(psi_future + psi_req - psi_current)


def steering_from_rate(L, v, psi_dot, v_eps, phi_max):
    """Steering angle realizing a heading rate on the kinematic bicycle."""
    vv = v if v > v_eps else v_eps
    phi = math.atan(L * psi_dot / vv)
    if phi > phi_max:
        phi = phi_max
    elif phi < -phi_max:
        phi = -phi_max
    return phi


def longitudinal_command(v, v_ref, kp_speed, a_idm, a_max_decel, a_cap):
    """Speed-tracking acceleration, ceilinged by the safe car-following value."""
    a_cmd = kp_speed * (v_ref - v)
    if a_idm < a_cmd:
        a_cmd = a_idm
    if a_cmd < -a_max_decel:
        a_cmd = -a_max_decel
    elif a_cmd > a_cap:
        a_cmd = a_cap
    return a_cmd


def step_kinematics(x, y, v, psi, a_cmd, phi, L, dt):
    """One forward-Euler step of the kinematic bicycle.

    Position advances along the pre-update heading with the pre-update
    speed; speed is floored at zero (no reverse). Returns (x, y, v, psi).
    """
    v_new = v + a_cmd * dt
    if v_new < 0.0:
        v_new = 0.0
    psi_new = wrap_angle(psi + (v / L) * math.tan(phi) * dt)
    x_new = x + v * dt * math.cos(psi)
    y_new = y + v * dt * math.sin(psi)
    return x_new, y_new, v_new, psi_new


def steer_to_lane(x_lateral, epsilon, psi_future, psi_current, v,
                  kp_lateral, kp_heading, v_eps, psi_req_max, L, phi_max):
    """Fused lateral chain: offset -> lateral speed -> heading -> steering."""
    v_lat = lateral_velocity(kp_lateral, x_lateral, epsilon)
    psi_req = required_heading(v, v_lat, v_eps, psi_req_max)
    psi_dot = heading_rate(kp_heading, psi_future, psi_req, psi_current)
    return steering_from_rate(L, v, psi_dot, v_eps, phi_max)
