"""Car-following model, parameter sampling, leader search, lane-change rule."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import straight_map

from trafficforge import road_graph
from trafficforge.dynamics import (IdmParams, LeaderInfo, MobilParams,
                                   desired_gap, find_leader, idm_accel,
                                   mobil_decide, sample_idm_params)


def _gap_oracle(s0, T, a, b, v, dv):
    return s0 + max(0.0, v * T + v * dv / (2.0 * math.sqrt(a * b)))


def _accel_oracle(a, b, v0, delta, T, s0, v, s, dv):
    sstar = _gap_oracle(s0, T, a, b, v, dv)
    return a * (1.0 - (v / v0) ** delta - (sstar / s) ** 2)


def test_desired_gap_standstill():
    p = IdmParams(v0=15.0, s0=2.0, T=1.5, a=1.5, b=2.0)
    assert desired_gap(p, 0.0, 0.0) == pytest.approx(2.0)


def test_desired_gap_closed_form():
    p = IdmParams(v0=15.0, s0=2.0, T=1.5, a=1.5, b=2.0)
    assert desired_gap(p, 10.0, 0.0) == pytest.approx(17.0)
    # with closing speed 2: 2 + 15 + 20 / (2 * sqrt(3))
    expected = 2.0 + 15.0 + 20.0 / (2.0 * math.sqrt(3.0))
    assert desired_gap(p, 10.0, 2.0) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(22.7735, abs=1e-4)


def test_desired_gap_floor():
    p = IdmParams(v0=15.0, s0=2.0, T=0.5, a=1.5, b=2.0)
    # strongly opening gap would make the dynamic term negative
    assert desired_gap(p, 5.0, -50.0) == pytest.approx(2.0)


def test_accel_free_flow_equilibrium():
    p = IdmParams(v0=15.0)
    assert idm_accel(p, None, 15.0) == 0.0
    assert idm_accel(p, None, 0.0) == pytest.approx(p.a)


def test_accel_matches_independent_oracle():
    p = IdmParams(v0=15.0, delta=4.0, T=1.5, s0=2.0, a=1.5, b=2.0)
    leader = LeaderInfo(2, gap_s=20.0, dv=2.0)
    got = idm_accel(p, leader, 10.0)
    want = _accel_oracle(1.5, 2.0, 15.0, 4.0, 1.5, 2.0, 10.0, 20.0, 2.0)
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(-0.741, abs=1e-3)


def test_accel_emergency_clamp():
    p = IdmParams(v0=15.0)
    leader = LeaderInfo(2, gap_s=0.5, dv=10.0)
    assert idm_accel(p, leader, 20.0) == -8.0


@settings(max_examples=200)
@given(st.floats(0.0, 25.0), st.floats(0.0, 25.0), st.floats(1.0, 200.0),
       st.floats(-10.0, 10.0))
def test_accel_monotone_in_speed(v1, v2, gap, dv):
    p = IdmParams(v0=14.0, T=1.2, s0=2.0, a=1.5, b=2.0)
    lo, hi = sorted((v1, v2))
    a_lo = idm_accel(p, LeaderInfo(0, gap, dv), lo)
    a_hi = idm_accel(p, LeaderInfo(0, gap, dv), hi)
    assert a_hi <= a_lo + 1e-12


@settings(max_examples=200)
@given(st.floats(1.0, 200.0), st.floats(1.0, 200.0), st.floats(0.0, 25.0),
       st.floats(-10.0, 10.0))
def test_accel_monotone_in_gap(g1, g2, v, dv):
    p = IdmParams(v0=14.0, T=1.2, s0=2.0, a=1.5, b=2.0)
    lo, hi = sorted((g1, g2))
    a_lo = idm_accel(p, LeaderInfo(0, lo, dv), v)
    a_hi = idm_accel(p, LeaderInfo(0, hi, dv), v)
    assert a_hi >= a_lo - 1e-12


def test_sample_params_within_ranges():
    for seed in range(200):
        p = sample_idm_params(seed, v0=12.0)
        assert p.delta == 4.0
        assert 0.5 <= p.T <= 2.5
        assert 0.5 <= p.s0 <= 4.0
        assert 1.0 <= p.a <= 2.0
        assert 1.5 <= p.b <= 2.5
    assert sample_idm_params(7, 12.0) == sample_idm_params(7, 12.0)


def test_sample_params_means():
    n = 10_000
    draws = [sample_idm_params(seed, 12.0) for seed in range(n)]
    for attr, (lo, hi) in (("T", (0.5, 2.5)), ("s0", (0.5, 4.0)),
                           ("a", (1.0, 2.0)), ("b", (1.5, 2.5))):
        values = np.array([getattr(p, attr) for p in draws])
        mid = (lo + hi) / 2.0
        sigma = (hi - lo) / math.sqrt(12.0 * n)
        assert abs(values.mean() - mid) < 3.0 * sigma, attr


def _two_agent_route(length=300.0):
    g = road_graph.build_graph(straight_map(length))
    start = road_graph.project_to_lane(g, (0.0, 0.0))
    return road_graph.enumerate_routes(g, start, horizon_dist=length + 10)[0]


def test_find_leader_empty_road():
    route = _two_agent_route()
    coords = {1: (0, 10.0, 10.0, 4.0)}
    assert find_leader(coords, 1, route) is None


def test_find_leader_gap_minus_half_lengths():
    route = _two_agent_route()
    coords = {1: (0, 10.0, 10.0, 4.0), 2: (0, 40.0, 5.0, 4.0)}
    info = find_leader(coords, 1, route)
    assert info.leader_id == 2
    assert info.gap_s == pytest.approx(26.0)
    assert info.dv == pytest.approx(5.0)


def test_find_leader_nearest_wins():
    route = _two_agent_route()
    coords = {1: (0, 0.0, 10.0, 4.0),
              2: (0, 50.0, 5.0, 4.0),
              3: (0, 20.0, 5.0, 4.0)}
    assert find_leader(coords, 1, route).leader_id == 3


def test_find_leader_sensing_range():
    route = _two_agent_route()
    coords = {1: (0, 0.0, 10.0, 4.0), 2: (0, 150.0, 5.0, 4.0)}
    assert find_leader(coords, 1, route, sensing_range=100.0) is None
    assert find_leader(coords, 1, route, sensing_range=200.0).leader_id == 2


def test_mobil_selfish_change():
    p = MobilParams(p=0.0, da_th=0.1, b_safe=4.0, da_bias=0.0)
    assert mobil_decide(p, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0) == "change"


def test_mobil_safety_veto():
    p = MobilParams(p=0.0, da_th=0.1, b_safe=4.0, da_bias=0.0)
    # huge incentive, but the new follower would brake at 5 > b_safe
    assert mobil_decide(p, 0.0, 10.0, 0.0, -5.0, 0.0, 0.0) == "keep"
    # and the subject itself must not need to brake harder than b_safe
    assert mobil_decide(p, 0.0, -5.0, 0.0, 0.0, 0.0, 0.0) == "keep"


def test_mobil_politeness_balance():
    p = MobilParams(p=1.0, da_th=0.1, b_safe=4.0, da_bias=0.0)
    # gain 0.2, others lose 0.3 -> total -0.1 < 0.1 -> keep
    assert mobil_decide(p, 0.0, 0.2, 0.0, -0.2, 0.0, -0.1) == "keep"


def test_mobil_p_zero_reduces_to_selfish(rng):
    p = MobilParams(p=0.0, da_th=0.1, b_safe=4.0, da_bias=0.05)
    for _ in range(300):
        acc = rng.uniform(-6, 3, size=6)
        got = mobil_decide(p, *acc)
        safe = (acc[3] - acc[2] > -p.b_safe) and (acc[1] - acc[0] > -p.b_safe)
        selfish = (acc[1] - acc[0]) > p.da_th - p.da_bias
        assert got == ("change" if (safe and selfish) else "keep")


def test_mobil_shift_invariance(rng):
    p = MobilParams(p=0.4, da_th=0.1, b_safe=4.0, da_bias=0.2)
    for _ in range(300):
        acc = rng.uniform(-6, 3, size=6)
        shift = float(rng.uniform(-5, 5))
        assert mobil_decide(p, *acc) == mobil_decide(p, *(acc + shift))


def test_idm_closed_loop_settles():
    """Follower behind a constant-speed leader converges to the desired gap."""
    dt = 0.1
    for seed in range(10):
        p = sample_idm_params(seed, v0=40.0)
        v_leader = 10.0
        x_l, x_f, v_f = 60.0, 0.0, 10.0
        for _ in range(600):
            gap = x_l - x_f
            acc = idm_accel(p, LeaderInfo(0, gap, v_f - v_leader), v_f)
            x_l += v_leader * dt
            x_f += v_f * dt
            v_f = max(v_f + acc * dt, 0.0)
        sstar = desired_gap(p, v_leader, 0.0)
        assert abs((x_l - x_f) - sstar) < 0.01 * sstar
