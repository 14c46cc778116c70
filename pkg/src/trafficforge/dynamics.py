"""Longitudinal car-following (IDM) and lane-change decisions (MOBIL).

The car-following acceleration is

    a_cf = a * (1 - (v / v0)^delta - (s* / s)^2)

with the desired minimum gap s* = s0 + max(0, v*T + v*dv / (2*sqrt(a*b))).
The lane-change test accepts a change when the politeness-weighted
acceleration gain clears the threshold and neither the subject nor the
new follower would brake harder than the safe limit.
"""

import math
from dataclasses import dataclass

import numpy as np

from trafficforge import kernels
from trafficforge.controller import A_MAX_DECEL

# sampling ranges for per-agent parameter draws: (low, high)
T_RANGE = (0.5, 2.5)
S0_RANGE = (0.5, 4.0)
A_RANGE = (1.0, 2.0)
B_RANGE = (1.5, 2.5)
DELTA = 4.0

SENSING_RANGE = 100.0


@dataclass
class IdmParams:
    v0: float           # desired speed; the engine sets this per step
    delta: float = DELTA
    T: float = 1.5
    s0: float = 2.0
    a: float = 1.5
    b: float = 2.0

    def validate(self):
        if min(self.a, self.b, self.s0, self.delta, self.v0) <= 0 or self.T < 0:
            raise ValueError("invalid IDM parameters")


@dataclass
class MobilParams:
    p: float = 0.3          # politeness factor
    da_th: float = 0.1      # acceleration-gain threshold, m/s^2
    b_safe: float = 4.0     # max braking imposed on anyone, m/s^2
    da_bias: float = 0.3    # bias toward the rightmost lane, m/s^2

    def validate(self):
        if self.b_safe <= 0 or self.p < 0:
            raise ValueError("invalid MOBIL parameters")


@dataclass
class LeaderInfo:
    leader_id: int
    gap_s: float   # bumper-to-bumper, meters
    dv: float      # v_follower - v_leader


def desired_gap(params, v, dv):
    """Desired minimum gap s* for the current speed and closing speed."""
    return kernels.desired_gap(params.s0, params.T, params.a, params.b, v, dv)


def idm_accel(params, leader, v, a_max_decel=A_MAX_DECEL):
    """Safe longitudinal acceleration; free road when ``leader`` is None.

    Clamped to [-a_max_decel, params.a]. A non-positive gap (prevented
    upstream) degrades to the emergency clamp.
    """
    if leader is None:
        gap, dv = math.inf, 0.0
    else:
        gap, dv = leader.gap_s, leader.dv
    return kernels.idm_accel(params.a, params.b, params.v0, params.delta,
                             params.T, params.s0, v, gap, dv, a_max_decel)


def sample_idm_params(rng_seed, v0, T_range=T_RANGE, s0_range=S0_RANGE,
                      a_range=A_RANGE, b_range=B_RANGE, delta=DELTA):
    """Draw per-agent IDM parameters uniformly from the documented ranges."""
    rng = np.random.default_rng(rng_seed)
    return IdmParams(
        v0=v0,
        delta=delta,
        T=float(rng.uniform(*T_range)),
        s0=float(rng.uniform(*s0_range)),
        a=float(rng.uniform(*a_range)),
        b=float(rng.uniform(*b_range)),
    )


def find_leader(agent_coords, subject_id, route,
                sensing_range=SENSING_RANGE):
    """First agent ahead of the subject along its route.

    ``agent_coords`` maps agent_id -> (edge_id, arc_on_edge, v, length).
    Distances are arc lengths along the route; the returned gap is
    bumper-to-bumper, floored at 0.01 m. Ties go to the lower agent id.
    """
    subj_edge, subj_arc, subj_v, subj_len = agent_coords[subject_id]
    subj_s = route.route_s_of(subj_edge, subj_arc)
    if subj_s is None:
        subj_s = 0.0
    best = None
    for aid in sorted(agent_coords):
        if aid == subject_id:
            continue
        edge_id, arc, v, length = agent_coords[aid]
        s = route.route_s_of(edge_id, arc)
        if s is None:
            continue
        dist = s - subj_s
        if dist <= 0.0 or dist > sensing_range:
            continue
        if best is None or dist < best[0]:
            best = (dist, aid, v, length)
    if best is None:
        return None
    dist, aid, v, length = best
    gap = max(dist - (subj_len + length) / 2.0, 0.01)
    return LeaderInfo(aid, gap, subj_v - v)


def mobil_decide(params, ac_old, ac_new, an_old, an_new, ao_old, ao_new):
    """Lane-change decision from the six involved accelerations.

    ``c`` is the subject, ``n`` the would-be new follower, ``o`` the old
    follower; ``*_new`` are the post-change values. Returns "change" when
    the incentive inequality and both safety inequalities hold.
    """
    if an_new - an_old <= -params.b_safe:
        return "keep"
    if ac_new - ac_old <= -params.b_safe:
        return "keep"
    gain = (ac_new - ac_old) \
        + params.p * ((an_new - an_old) + (ao_new - ao_old))
    return "change" if gain > params.da_th - params.da_bias else "keep"
