"""Scene reconstruction from recorded tracklets.

Each tracklet is interpolated to the requested start time, snapped onto
the lane graph, and turned into an initial vehicle state. Agents that miss
the map or spawn on top of another agent are dropped with a report entry.
"""

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from trafficforge import road_graph
from trafficforge.controller import VehicleGeometry, VehicleState
from trafficforge.errors import EmptySceneError, OffMapError
from trafficforge.kernels import wrap_angle

MIN_SPAWN_GAP = 2.0


@dataclass
class TrackletPose:
    t: float
    position: np.ndarray
    heading: Optional[float] = None
    speed: Optional[float] = None


@dataclass
class Tracklet:
    agent_id: int
    poses: list
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)

    @property
    def times(self):
        return [p.t for p in self.poses]


@dataclass
class AgentInit:
    agent_id: int
    lane: road_graph.LaneCoordinate
    state: VehicleState
    geometry: VehicleGeometry
    tracklet: Optional[Tracklet] = None  # kept for ego-replay mode


@dataclass
class DropReport:
    agent_id: int
    reason: str


@dataclass
class Scene:
    graph: road_graph.RoadGraph
    agents: list
    scene_id: str
    dropped: list = field(default_factory=list)

    def to_json(self):
        """Canonical serialization (agents only); byte-stable across runs."""
        doc = {
            "scene_id": self.scene_id,
            "agents": [
                {
                    "agent_id": a.agent_id,
                    "edge_id": int(a.lane.edge_id),
                    "arc_s": a.lane.arc_s,
                    "lateral_offset": a.lane.lateral_offset,
                    "x": float(a.state.position[0]),
                    "y": float(a.state.position[1]),
                    "v": a.state.v,
                    "psi": a.state.psi,
                    "length": a.geometry.L,
                    "width": a.geometry.width,
                }
                for a in self.agents
            ],
            "dropped": [{"agent_id": d.agent_id, "reason": d.reason}
                        for d in self.dropped],
        }
        return json.dumps(doc, sort_keys=True)


def load_tracklets(doc):
    """Parse the tracklet JSON schema into (scene_id, [Tracklet])."""
    tracks = []
    for tr in doc["tracks"]:
        poses = [TrackletPose(float(p["t"]),
                              np.array([p["x"], p["y"]], dtype=float),
                              p.get("heading"), p.get("speed"))
                 for p in tr["poses"]]
        if any(poses[i + 1].t < poses[i].t for i in range(len(poses) - 1)):
            raise ValueError(f"track {tr['agent_id']}: times not sorted")
        geom = VehicleGeometry(L=float(tr.get("length", 4.5)),
                               width=float(tr.get("width", 1.8)))
        tracks.append(Tracklet(int(tr["agent_id"]), poses, geom))
    return str(doc.get("scene_id", "scene")), tracks


def interpolate_pose(tracklet, t):
    """Pose at time ``t``: linear position/speed, shortest-arc heading."""
    poses = tracklet.poses
    if t < poses[0].t - 1e-9 or t > poses[-1].t + 1e-9:
        raise ValueError(
            f"t={t} outside tracklet range [{poses[0].t}, {poses[-1].t}]")
    times = tracklet.times
    i = min(max(bisect_right(times, t) - 1, 0), len(poses) - 2) \
        if len(poses) > 1 else 0
    p0 = poses[i]
    if len(poses) == 1 or t <= p0.t:
        return TrackletPose(t, p0.position.copy(), p0.heading, p0.speed)
    p1 = poses[i + 1]
    w = (t - p0.t) / (p1.t - p0.t) if p1.t > p0.t else 0.0
    pos = p0.position + w * (p1.position - p0.position)
    heading = None
    if p0.heading is not None and p1.heading is not None:
        heading = wrap_angle(p0.heading + w * wrap_angle(p1.heading - p0.heading))
    speed = None
    if p0.speed is not None and p1.speed is not None:
        speed = p0.speed + w * (p1.speed - p0.speed)
    return TrackletPose(t, pos, heading, speed)


def _finite_difference_heading(tracklet, t):
    poses = tracklet.poses
    if len(poses) < 2:
        return None
    times = tracklet.times
    i = min(max(bisect_right(times, t) - 1, 0), len(poses) - 2)
    d = poses[i + 1].position - poses[i].position
    if np.linalg.norm(d) < 1e-9:
        return None
    return float(np.arctan2(d[1], d[0]))


def _finite_difference_speed(tracklet, t):
    poses = tracklet.poses
    if len(poses) < 2:
        return 0.0
    times = tracklet.times
    i = min(max(bisect_right(times, t) - 1, 0), len(poses) - 2)
    lo, hi = max(i - 1, 0), min(i + 1, len(poses) - 1)
    dt = poses[hi].t - poses[lo].t
    if dt <= 0:
        return 0.0
    return float(np.linalg.norm(poses[hi].position - poses[lo].position) / dt)


def instantiate_agents(graph, tracklets, t0, scene_id="scene",
                       min_spawn_gap=MIN_SPAWN_GAP,
                       max_snap_distance=road_graph.MAX_SNAP_DISTANCE):
    """Project tracklets at ``t0`` onto the graph and build a Scene.

    The initial heading comes from the lane, not the recorded pose; the
    recorded heading only breaks projection ties. Agents closer than
    ``min_spawn_gap`` bumper-to-bumper on one edge are thinned, keeping
    the lower agent id.
    """
    if not tracklets:
        raise EmptySceneError("no tracklets given")

    agents = []
    dropped = []
    for tr in sorted(tracklets, key=lambda t: t.agent_id):
        try:
            pose = interpolate_pose(tr, t0)
        except ValueError:
            dropped.append(DropReport(tr.agent_id, "no-pose-at-t0"))
            continue
        hint = pose.heading if pose.heading is not None \
            else _finite_difference_heading(tr, t0)
        try:
            lane = road_graph.project_to_lane(
                graph, pose.position, heading_hint=hint,
                max_snap_distance=max_snap_distance)
        except OffMapError:
            dropped.append(DropReport(tr.agent_id, "off-map"))
            continue
        speed = pose.speed if pose.speed is not None \
            else _finite_difference_speed(tr, t0)
        state = VehicleState(position=pose.position.copy(),
                             v=max(float(speed), 0.0),
                             psi=lane.lane_heading, a=0.0, phi=0.0)
        agents.append(AgentInit(tr.agent_id, lane, state, tr.geometry, tr))

    # spawn-gap thinning per edge, dropping the higher id of each conflict;
    # checking s-adjacent pairs is sufficient for bumper distance
    by_edge = {}
    for a in agents:
        by_edge.setdefault(a.lane.edge_id, []).append(a)
    removed = set()
    for eid, group in sorted(by_edge.items()):
        while True:
            group.sort(key=lambda a: (a.lane.arc_s, a.agent_id))
            loser = None
            for a, b in zip(group, group[1:]):
                gap = abs(b.lane.arc_s - a.lane.arc_s) \
                    - (a.geometry.L + b.geometry.L) / 2.0
                if gap < min_spawn_gap:
                    loser = a if a.agent_id > b.agent_id else b
                    break
            if loser is None:
                break
            group.remove(loser)
            removed.add(loser.agent_id)
            dropped.append(DropReport(loser.agent_id, "spawn-gap"))

    agents = [a for a in agents if a.agent_id not in removed]
    if not agents:
        raise EmptySceneError(f"scene {scene_id}: every agent was dropped")
    return Scene(graph, agents, scene_id, dropped)
