"""Diverse behavior sampling and reference velocity-profile matching.

A pool of velocity profiles is mined from real trajectories, each labeled
with its maneuver and a matching feature: for turns the distance traveled
before the turn starts, for straight driving the average speed. Simulated
agents pick routes per maneuver and look up the nearest-neighbor profile
by feature, with per-sample Gaussian noise for extra diversity.
"""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from trafficforge import geometry, road_graph
from trafficforge.errors import MissingProfileError
from trafficforge.kernels import wrap_angle
from trafficforge.util import derive_seed

TURN_RATE_THRESHOLD = 0.1   # rad/s, onset of a turn in timestamped data
TURN_RATE_SUSTAIN = 0.5     # s the rate must stay above threshold
TURN_CURVATURE_THRESHOLD = 0.05  # rad/m, onset on pure route geometry
TURN_CURVATURE_SUSTAIN = 1.0     # m of sustained curvature
PROFILE_NOISE_STD = 1.0     # m/s, per-sample
MANEUVER_LABELS = ("left", "right", "straight")


@dataclass
class VelocityProfile:
    dt: float
    samples: np.ndarray
    feature: float
    maneuver: str

    def value_at(self, step):
        """Reference speed at a simulation step; holds the last value."""
        i = min(step, len(self.samples) - 1)
        return float(self.samples[i])


class ProfilePool:
    """Velocity profiles partitioned by maneuver label."""

    def __init__(self, profiles):
        self.profiles = list(profiles)
        self.by_label = {}
        for i, p in enumerate(self.profiles):
            self.by_label.setdefault(p.maneuver, []).append(i)

    def __len__(self):
        return len(self.profiles)

    def to_json(self):
        doc = {
            "dt": self.profiles[0].dt if self.profiles else 0.1,
            "profiles": [
                {"label": p.maneuver, "feature": p.feature,
                 "samples": [float(s) for s in p.samples]}
                for p in self.profiles
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        dt = float(doc["dt"])
        profiles = [VelocityProfile(dt, np.asarray(p["samples"], float),
                                    float(p["feature"]), p["label"])
                    for p in doc["profiles"]]
        return cls(profiles)


@dataclass
class BehaviorAssignment:
    agent_id: int
    route: Optional[road_graph.Route]
    label: str
    profile: Optional[VelocityProfile]

    @property
    def static(self):
        return self.route is None


def distance_before_turn(traj, rate_threshold=TURN_RATE_THRESHOLD,
                         sustain=TURN_RATE_SUSTAIN):
    """Arc length traveled before the first sustained turn onset.

    ``traj`` is an (N, 3) array of (t, x, y). The onset is the first
    timestep whose heading-rate magnitude exceeds the threshold for at
    least ``sustain`` seconds; without one the full arc length returns.
    """
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != 3 or len(traj) < 3:
        raise ValueError("need an (N>=3, 3) array of (t, x, y)")
    t = traj[:, 0]
    pts = traj[:, 1:]
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])

    # headings per segment, carrying the previous one over standstill gaps
    headings = np.arctan2(seg[:, 1], seg[:, 0])
    for i in range(1, len(headings)):
        if seg_len[i] < 1e-9:
            headings[i] = headings[i - 1]

    n_rate = len(headings) - 1
    onset = None
    for i in range(n_rate):
        # sustained window starting at rate sample i
        t_start = t[i + 1]
        j = i
        while j < n_rate:
            dt_j = t[j + 2] - t[j + 1]
            if dt_j <= 0:
                break
            rate = wrap_angle(headings[j + 1] - headings[j]) / dt_j
            if abs(rate) <= rate_threshold:
                break
            if t[j + 2] - t_start >= sustain:
                onset = i
                break
            j += 1
        if onset is not None:
            break
    if onset is None:
        return float(arc[-1])
    return float(arc[onset + 1])


def _speeds_from_positions(t, pts):
    """Central-difference speed magnitudes at every sample."""
    n = len(t)
    v = np.empty(n)
    for i in range(n):
        lo, hi = max(i - 1, 0), min(i + 1, n - 1)
        dt = t[hi] - t[lo]
        v[i] = np.linalg.norm(pts[hi] - pts[lo]) / dt if dt > 0 else 0.0
    return v


def build_profile_pool(real_trajs, dt,
                       straight_threshold=road_graph.STRAIGHT_THRESHOLD):
    """Mine a labeled profile pool from timestamped (t, x, y) trajectories.

    Speeds come from finite differences and are resampled to ``dt``.
    Trajectories with fewer than 3 points or non-increasing times are
    skipped and reported.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    profiles = []
    skipped = []
    for idx, traj in enumerate(real_trajs):
        traj = np.asarray(traj, dtype=float)
        if traj.ndim != 2 or traj.shape[1] != 3 or len(traj) < 3:
            skipped.append((idx, "too-short"))
            continue
        t = traj[:, 0]
        if np.any(np.diff(t) <= 0):
            skipped.append((idx, "bad-times"))
            continue
        pts = traj[:, 1:]
        speeds = _speeds_from_positions(t, pts)
        rel_t = t - t[0]
        grid = np.arange(0.0, rel_t[-1] + dt / 2, dt)
        samples = np.interp(grid, rel_t, speeds)
        label = road_graph.classify_maneuver(pts, straight_threshold)
        if label == "straight":
            feature = float(samples.mean())
        else:
            feature = distance_before_turn(traj)
        profiles.append(VelocityProfile(dt, samples, feature, label))
    pool = ProfilePool(profiles)
    pool.skipped = skipped
    return pool


def match_profile(pool, label, feature_query, rng_seed,
                  noise_std=PROFILE_NOISE_STD):
    """Nearest profile by feature distance, returned with sampled noise.

    Noise is i.i.d. Gaussian per sample (std in m/s), clamped so speeds
    stay non-negative; ``noise_std=0`` returns the profile unchanged.
    """
    indices = pool.by_label.get(label)
    if not indices:
        raise MissingProfileError(label)
    best = min(indices,
               key=lambda i: (abs(pool.profiles[i].feature - feature_query), i))
    src = pool.profiles[best]
    samples = src.samples.copy()
    if noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        samples = np.maximum(
            samples + rng.normal(0.0, noise_std, size=len(samples)), 0.0)
    return VelocityProfile(src.dt, samples, src.feature, src.maneuver)


def feature_for_behavior(agent_init, route,
                         curvature_threshold=TURN_CURVATURE_THRESHOLD,
                         sustain_arc=TURN_CURVATURE_SUSTAIN,
                         arc_step=0.5):
    """Profile-matching feature for one agent/route pair.

    Straight routes use the agent's current speed; turning routes use the
    arc distance from the route start to the turn onset, detected as
    sustained curvature above the threshold on the resampled geometry.
    """
    if route.maneuver == "straight":
        return float(agent_init.state.v)
    pts = geometry.resample_polyline(route.polyline, arc_step)
    headings = geometry.segment_headings(pts)
    n_rate = len(headings) - 1
    run_start = None
    for i in range(n_rate):
        curv = abs(wrap_angle(headings[i + 1] - headings[i])) / arc_step
        if curv > curvature_threshold:
            if run_start is None:
                run_start = i
            if (i - run_start + 1) * arc_step >= sustain_arc:
                return float((run_start + 1) * arc_step)
        else:
            run_start = None
    return float(route.total_length)


def sample_behaviors(scene, graph, pool, rng_seed, max_variants=3,
                     horizon_dist=road_graph.HORIZON_DIST,
                     max_routes=road_graph.MAX_ROUTES,
                     noise_std=PROFILE_NOISE_STD):
    """Sample up to ``max_variants`` distinct behavior sets for a scene.

    Per agent, maneuver labels are drawn without replacement across
    variants (cycling once exhausted) and a route is drawn uniformly
    within the label. Variant sets that repeat an earlier multiset of
    (agent, label) pairs are dropped, so fewer than ``max_variants`` sets
    may return. Fully determined by ``rng_seed``.
    """
    if max_variants < 1:
        raise ValueError("max_variants must be >= 1")

    per_agent = {}
    for agent in scene.agents:
        routes = road_graph.enumerate_routes(graph, agent.lane,
                                             horizon_dist, max_routes)
        by_label = {}
        for r in routes:
            by_label.setdefault(r.maneuver, []).append(r)
        rng = np.random.default_rng(derive_seed(rng_seed, agent.agent_id))
        labels = sorted(by_label)
        order = [labels[i] for i in rng.permutation(len(labels))] \
            if labels else []
        per_agent[agent.agent_id] = (agent, by_label, order, rng)

    variants = []
    seen = set()
    for k in range(max_variants):
        assignment = {}
        for aid in sorted(per_agent):
            agent, by_label, order, rng = per_agent[aid]
            if not order:
                assignment[aid] = BehaviorAssignment(aid, None, "static", None)
                continue
            label = order[k % len(order)]
            candidates = by_label[label]
            route = candidates[int(rng.integers(len(candidates)))]
            feature = feature_for_behavior(agent, route)
            profile = match_profile(
                pool, label, feature,
                derive_seed(rng_seed, aid, k, "profile"), noise_std)
            assignment[aid] = BehaviorAssignment(aid, route, label, profile)
        key = tuple(sorted((aid, a.label) for aid, a in assignment.items()))
        if key in seen:
            continue
        seen.add(key)
        variants.append(assignment)
    return variants
