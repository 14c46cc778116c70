# cython: language_level=3, boundscheck=False, cdivision=True
"""Compiled scalar kernels for the per-step simulation math.

Mirrors ``trafficforge._pykernels`` operation for operation on C doubles;
both backends therefore return bit-identical IEEE-754 results.
"""

from libc.math cimport asin, atan, cos, fmod, pow, sin, sqrt, tan

cdef double PI = 3.14159265358979323846264
cdef double TWO_PI = 6.283185307179586476925287

BACKEND = "compiled"


cpdef double wrap_angle(double theta):
    """Wrap an angle to the interval (-pi, pi]."""
    cdef double t = fmod(theta + PI, TWO_PI)
    if t <= 0.0:
        t += TWO_PI
    return t - PI


cpdef double desired_gap(double s0, double T, double a, double b,
                         double v, double dv):
    """Desired minimum gap: s0 plus the speed- and approach-dependent term."""
    cdef double dyn = v * T + v * dv / (2.0 * sqrt(a * b))
    if dyn < 0.0:
        dyn = 0.0
    return s0 + dyn


cpdef double idm_accel(double a, double b, double v0, double delta,
                       double T, double s0, double v, double gap,
                       double dv, double a_max_decel):
    """Car-following acceleration; ``gap`` of +inf means a free road."""
    cdef double sstar, ratio, acc
    if gap <= 0.0:
        return -a_max_decel
    sstar = desired_gap(s0, T, a, b, v, dv)
    ratio = sstar / gap
    acc = a * (1.0 - pow(v / v0, delta) - ratio * ratio)
    if acc < -a_max_decel:
        acc = -a_max_decel
    elif acc > a:
        acc = a
    return acc


cpdef double lateral_velocity(double kp_lateral, double x_lateral,
                              double epsilon):
    """Corrective lateral speed command from the signed lane offset."""
    return -kp_lateral * (x_lateral + epsilon)


cpdef double required_heading(double v, double v_lateral, double v_eps,
                              double psi_req_max):
    """Heading correction needed to realize the lateral speed command."""
    cdef double vv = v if v > v_eps else v_eps
    cdef double ratio = v_lateral / vv
    cdef double psi
    if ratio > 1.0:
        ratio = 1.0
    elif ratio < -1.0:
        ratio = -1.0
    psi = asin(ratio)
    if psi > psi_req_max:
        psi = psi_req_max
    elif psi < -psi_req_max:
        psi = -psi_req_max
    return psi


cpdef double heading_rate(double kp_heading, double psi_future,
                          double psi_req, double psi_current):
    """Proportional heading-rate command from the wrapped heading error."""
    return kp_heading * wrap_angle(psi_future + psi_req - psi_current)


cpdef double steering_from_rate(double L, double v, double psi_dot,
                                double v_eps, double phi_max):
    """Steering angle realizing a heading rate on the kinematic bicycle."""
    cdef double vv = v if v > v_eps else v_eps
    cdef double phi = atan(L * psi_dot / vv)
    if phi > phi_max:
        phi = phi_max
    elif phi < -phi_max:
        phi = -phi_max
    return phi


cpdef double longitudinal_command(double v, double v_ref, double kp_speed,
                                  double a_idm, double a_max_decel,
                                  double a_cap):
    """Speed-tracking acceleration, ceilinged by the safe car-following value."""
    cdef double a_cmd = kp_speed * (v_ref - v)
    if a_idm < a_cmd:
        a_cmd = a_idm
    if a_cmd < -a_max_decel:
        a_cmd = -a_max_decel
    elif a_cmd > a_cap:
        a_cmd = a_cap
    return a_cmd


cpdef tuple step_kinematics(double x, double y, double v, double psi,
                            double a_cmd, double phi, double L, double dt):
    """One forward-Euler step of the kinematic bicycle; returns (x, y, v, psi)."""
    cdef double v_new = v + a_cmd * dt
    cdef double psi_new, x_new, y_new
    if v_new < 0.0:
        v_new = 0.0
    psi_new = wrap_angle(psi + (v / L) * tan(phi) * dt)
    x_new = x + v * dt * cos(psi)
    y_new = y + v * dt * sin(psi)
    return (x_new, y_new, v_new, psi_new)


cpdef double steer_to_lane(double x_lateral, double epsilon,
                           double psi_future, double psi_current, double v,
                           double kp_lateral, double kp_heading,
                           double v_eps, double psi_req_max, double L,
                           double phi_max):
    """Fused lateral chain: offset -> lateral speed -> heading -> steering."""
    cdef double v_lat = lateral_velocity(kp_lateral, x_lateral, epsilon)
    cdef double psi_req = required_heading(v, v_lat, v_eps, psi_req_max)
    cdef double psi_dot = heading_rate(kp_heading, psi_future, psi_req,
                                       psi_current)
    return steering_from_rate(L, v, psi_dot, v_eps, phi_max)
