"""Per-scene multi-agent simulation loop.

Every step freezes the previous state, computes leader gaps, car-following
accelerations, lane-change decisions and controller commands for every
agent from that frozen snapshot, then integrates all agents
simultaneously. The synchronous update makes results independent of agent
order and allows scene-level parallelism with byte-identical output.
"""

import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from trafficforge import behavior as behavior_mod
from trafficforge import dynamics, geometry, road_graph
from trafficforge.controller import ControllerParams, step_kinematics
from trafficforge.errors import ConfigError
from trafficforge.kernels import longitudinal_command, steer_to_lane
from trafficforge.util import derive_seed, digest

V0_FLOOR = 0.1          # reference speed floor for the free-flow term
EXIT_EPS = 1e-6
MOBIL_EVAL_MAX_OFFSET = 0.5   # only consider lane changes near the centerline
LANE_CHANGE_SETTLED = 0.3     # offset below which a transition counts as done


@dataclass
class SimConfig:
    dt: float = 0.1
    horizon: float = 7.0
    max_variants: int = 3
    master_seed: int = 0
    ego_mode: str = "simulate"          # or "replay"
    sensing_range: float = dynamics.SENSING_RANGE
    max_lane_deviation: float = 3.0
    horizon_dist: float = road_graph.HORIZON_DIST
    max_routes: int = road_graph.MAX_ROUTES
    profile_noise_std: float = behavior_mod.PROFILE_NOISE_STD
    epsilon_std: float = 0.2
    lane_change_enabled: bool = True
    idm_ranges: dict = field(default_factory=lambda: {
        "T_range": dynamics.T_RANGE, "s0_range": dynamics.S0_RANGE,
        "a_range": dynamics.A_RANGE, "b_range": dynamics.B_RANGE})
    mobil: dynamics.MobilParams = field(default_factory=dynamics.MobilParams)
    controller: ControllerParams = field(default_factory=ControllerParams)

    def validate(self):
        problems = []
        if self.dt <= 0:
            problems.append("sim.dt must be positive")
        else:
            steps = self.horizon / self.dt
            if self.horizon <= 0 or abs(steps - round(steps)) > 1e-9:
                problems.append("sim.horizon must be a positive multiple of sim.dt")
        if self.max_variants < 1:
            problems.append("sim.max_variants must be >= 1")
        if self.ego_mode not in ("simulate", "replay"):
            problems.append("sim.ego_mode must be 'simulate' or 'replay'")
        if self.sensing_range <= 0:
            problems.append("sim.sensing_range must be positive")
        if problems:
            raise ConfigError(problems)
        return self

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    def to_dict(self):
        d = dataclasses.asdict(self)
        return d


@dataclass
class AgentLog:
    agent_id: int
    label: str
    route_edges: list
    idm: dict
    epsilon: float
    exit_step: Optional[int]
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    a: np.ndarray
    phi: np.ndarray
    x_lat: np.ndarray
    lane_changes: list


@dataclass
class SimLog:
    scene_id: str
    variant_index: int
    dt: float
    master_seed: int
    config_digest: str
    agents: list

    def write_csv(self, fh):
        fh.write("scene_id,variant,agent_id,t,x,y,v,psi,a,phi,label\n")
        for ag in self.agents:
            for i in range(len(ag.t)):
                vals = ",".join(repr(float(v)) for v in
                                (ag.x[i], ag.y[i], ag.v[i], ag.psi[i],
                                 ag.a[i], ag.phi[i]))
                fh.write(f"{self.scene_id},{self.variant_index},"
                         f"{ag.agent_id},{ag.t[i]:.3f},{vals},{ag.label}\n")

    def to_csv(self):
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def sidecar(self):
        return {
            "scene_id": self.scene_id,
            "variant": self.variant_index,
            "dt": self.dt,
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "agents": [
                {
                    "agent_id": ag.agent_id,
                    "label": ag.label,
                    "route_edges": [int(e) for e in ag.route_edges],
                    "idm": ag.idm,
                    "epsilon": ag.epsilon,
                    "exit_step": ag.exit_step,
                    "lane_changes": [
                        {"step": s, "from_edge": int(a), "to_edge": int(b)}
                        for s, a, b in ag.lane_changes
                    ],
                }
                for ag in self.agents
            ],
        }


class _AgentRun:
    """Mutable per-agent bookkeeping inside one scene simulation."""

    def __init__(self, init, assignment, idm, ctrl, replay=False):
        self.agent_id = init.agent_id
        self.geom = init.geometry
        self.state = init.state.copy()
        self.lane = init.lane
        self.tracklet = getattr(init, "tracklet", None)
        self.assignment = assignment
        self.route = assignment.route if assignment else None
        self.label = assignment.label if assignment else "replay"
        self.profile = assignment.profile if assignment else None
        self.static = assignment.static if assignment else False
        self.replay = replay
        self.idm = idm
        self.ctrl = ctrl
        self.s = 0.0
        self.x_lat = init.lane.lateral_offset
        self.exit_step = None
        self.lane_changes = []
        self.rows = []       # (x, y, v, psi, a, phi, x_lat)
        if self.static:
            self.state.v = 0.0

    @property
    def exited(self):
        return self.exit_step is not None

    def log_state(self):
        st = self.state
        self.rows.append((st.position[0], st.position[1], st.v, st.psi,
                          st.a, st.phi, self.x_lat))

    def coords(self):
        """(edge_id, arc_on_edge, v, length) for the interaction snapshot."""
        if self.route is not None:
            eid, arc = _edge_at(self.route, self.s)
            return (eid, arc, self.state.v, self.geom.L)
        return (self.lane.edge_id, self.lane.arc_s, self.state.v, self.geom.L)


def _edge_at(route, s):
    """Map a route arc position to (edge_id, arc_on_edge)."""
    spans = route.edge_spans
    for i in range(len(spans) - 1, -1, -1):
        eid, s_start, arc0 = spans[i]
        if s >= s_start - 1e-9:
            return eid, arc0 + (s - s_start)
    eid, s_start, arc0 = spans[0]
    return eid, arc0


def simulate_scene(scene, assignment, config, variant_index=0):
    """Run one behavior variant of a scene and return its SimLog."""
    config.validate()
    agent_ids = {a.agent_id for a in scene.agents}
    unknown = set(assignment) - agent_ids
    if unknown:
        raise ConfigError([f"assignment references unknown agents {sorted(unknown)}"])

    ego_id = min(agent_ids) if agent_ids else None
    runs = []
    for init in scene.agents:
        aid = init.agent_id
        replay = (config.ego_mode == "replay" and aid == ego_id
                  and getattr(init, "tracklet", None) is not None)
        if not replay and aid not in assignment:
            raise ConfigError([f"agent {aid} has no behavior assignment"])
        asg = assignment.get(aid)
        seed_parts = (config.master_seed, scene.scene_id, variant_index, aid)
        idm = dynamics.sample_idm_params(derive_seed(*seed_parts, "idm"),
                                         v0=1.0, **config.idm_ranges)
        eps_rng = np.random.default_rng(derive_seed(*seed_parts, "eps"))
        ctrl = dataclasses.replace(
            config.controller,
            epsilon=float(eps_rng.normal(0.0, config.epsilon_std)))
        runs.append(_AgentRun(init, None if replay else asg, idm, ctrl,
                              replay=replay))

    graph = scene.graph
    dt = config.dt
    n_steps = config.n_steps
    cfg_digest = digest(config.to_dict())

    for run in runs:
        if run.route is not None:
            s, _, lat = run.route.project_near(run.state.position, 0.0)
            run.s, run.x_lat = s, lat
        run.log_state()

    for k in range(n_steps):
        active = [r for r in runs if not r.exited]
        # refresh route projections and detect exits on the frozen state
        still = []
        for run in active:
            if run.route is not None and not run.static:
                back = 5.0
                fwd = run.state.v * dt + 10.0
                s, _, lat = run.route.project_near(run.state.position,
                                                   run.s, back, fwd)
                run.s, run.x_lat = s, lat
                if s >= run.route.total_length - EXIT_EPS:
                    run.exit_step = k
                    continue
            elif run.replay:
                run.x_lat = 0.0
                try:
                    lane = road_graph.project_to_lane(graph, run.state.position)
                    run.lane = lane
                except Exception:
                    run.exit_step = k
                    continue
            still.append(run)
        active = still
        coords = {r.agent_id: r.coords() for r in active}
        by_id = {r.agent_id: r for r in active}

        # decisions from the frozen snapshot
        commands = {}
        retargets = {}
        for run in active:
            if run.replay:
                continue
            if run.static or run.route is None:
                commands[run.agent_id] = (0.0, 0.0)
                continue
            v = run.state.v
            v_ref = run.profile.value_at(k) if run.profile is not None else 0.0
            run.idm.v0 = max(v_ref, V0_FLOOR)
            leader = dynamics.find_leader(coords, run.agent_id, run.route,
                                          config.sensing_range)
            a_idm = dynamics.idm_accel(run.idm, leader, v,
                                       config.controller.a_max_decel)
            if config.lane_change_enabled and abs(run.x_lat) <= MOBIL_EVAL_MAX_OFFSET:
                target = _consider_lane_change(graph, run, coords, by_id,
                                               a_idm, config, k)
                if target is not None:
                    retargets[run.agent_id] = target

            ctrl = run.ctrl
            look = max(v * ctrl.lookahead_time, ctrl.lookahead_min)
            psi_future = run.route.heading_at(min(run.s + look,
                                                  run.route.total_length))
            phi = steer_to_lane(run.x_lat, ctrl.epsilon, psi_future,
                                run.state.psi, v, ctrl.kp_lateral,
                                ctrl.kp_heading, ctrl.v_eps,
                                ctrl.psi_req_max, run.geom.L, ctrl.phi_max)
            a_cmd = longitudinal_command(v, v_ref, ctrl.kp_speed, a_idm,
                                         ctrl.a_max_decel, run.idm.a)
            commands[run.agent_id] = (a_cmd, phi)

        # apply all updates simultaneously
        for run in active:
            if run.replay:
                _replay_step(run, (k + 1) * dt, dt)
            elif run.static:
                pass
            else:
                a_cmd, phi = commands[run.agent_id]
                run.state = step_kinematics(run.state, a_cmd, phi,
                                            run.geom, dt)
            if run.agent_id in retargets:
                new_route, s_new, old_edge, new_edge = retargets[run.agent_id]
                run.route = new_route
                run.s = s_new
                run.lane_changes.append((k, old_edge, new_edge))
            run.log_state()

    t_axis = np.arange(n_steps + 1) * dt
    agents = []
    for run in runs:
        rows = np.asarray(run.rows)
        n = len(rows)
        agents.append(AgentLog(
            agent_id=run.agent_id,
            label=run.label,
            route_edges=(list(run.assignment.route.edge_ids)
                         if run.assignment and run.assignment.route else []),
            idm={"T": run.idm.T, "s0": run.idm.s0, "a": run.idm.a,
                 "b": run.idm.b, "delta": run.idm.delta},
            epsilon=run.ctrl.epsilon,
            exit_step=run.exit_step,
            t=t_axis[:n],
            x=rows[:, 0], y=rows[:, 1], v=rows[:, 2], psi=rows[:, 3],
            a=rows[:, 4], phi=rows[:, 5], x_lat=rows[:, 6],
            lane_changes=run.lane_changes,
        ))
    return SimLog(scene.scene_id, variant_index, dt, config.master_seed,
                  cfg_digest, agents)


def _replay_step(run, rel_t, dt):
    from trafficforge.scene_ingest import interpolate_pose
    tr = run.tracklet
    t = tr.poses[0].t + rel_t
    t = min(max(t, tr.poses[0].t), tr.poses[-1].t)
    pose = interpolate_pose(tr, t)
    prev = run.state.position
    heading = pose.heading
    if heading is None:
        d = pose.position - prev
        heading = math.atan2(d[1], d[0]) if np.linalg.norm(d) > 1e-9 \
            else run.state.psi
    v = pose.speed
    if v is None:
        v = float(np.linalg.norm(pose.position - prev) / dt)
    run.state.position = pose.position.copy()
    run.state.psi = heading
    run.state.v = max(float(v), 0.0)


def _consider_lane_change(graph, run, coords, by_id, ac_old, config, step):
    """Evaluate MOBIL toward the right then the left neighbor lane.

    Returns (new_route, s_on_new_route, old_edge, new_edge) or None. All
    candidate accelerations are evaluated on the frozen snapshot.
    """
    eid, arc = _edge_at(run.route, run.s)
    edge = graph.edges[eid]
    for side in ("right", "left"):
        nb = edge.right_neighbor if side == "right" else edge.left_neighbor
        if nb is None:
            continue
        target = _retarget_route(graph, run, nb, config)
        if target is None:
            continue
        new_route, s_new = target
        nb_edge, nb_arc = _edge_at(new_route, s_new)

        # subject's acceleration if it were on the target lane
        coords_moved = dict(coords)
        coords_moved[run.agent_id] = (nb_edge, nb_arc, run.state.v, run.geom.L)
        new_leader = dynamics.find_leader(coords_moved, run.agent_id,
                                          new_route, config.sensing_range)
        ac_new = dynamics.idm_accel(run.idm, new_leader, run.state.v,
                                    config.controller.a_max_decel)

        an_old, an_new = _follower_effect(nb, nb_arc, coords, coords_moved,
                                          by_id, run.agent_id, config)
        ao_old, ao_new = _old_follower_effect(eid, arc, coords, by_id,
                                              run.agent_id, config)

        mobil = dataclasses.replace(
            config.mobil,
            da_bias=config.mobil.da_bias if side == "right"
            else -config.mobil.da_bias)
        if dynamics.mobil_decide(mobil, ac_old, ac_new, an_old, an_new,
                                 ao_old, ao_new) == "change":
            return new_route, s_new, eid, nb
    return None


def _retarget_route(graph, run, neighbor_eid, config):
    """Route continuing from the neighbor lane abeam the agent."""
    nb = graph.edges[neighbor_eid]
    s_nb, dist, lat = geometry.project_point(nb.polyline, nb.cum,
                                             run.state.position)
    if s_nb >= nb.length - 1e-6:
        return None
    coord = road_graph.LaneCoordinate(neighbor_eid, s_nb, lat,
                                      nb.point_at(s_nb)[1])
    routes = road_graph.enumerate_routes(graph, coord, config.horizon_dist,
                                         config.max_routes)
    if not routes:
        return None
    same = [r for r in routes if r.maneuver == run.label]
    return (same[0] if same else routes[0]), 0.0


def _follower_effect(nb_edge, nb_arc, coords, coords_moved, by_id,
                     subject_id, config):
    """Accelerations of the would-be new follower before/after the change."""
    follower = _nearest_behind(coords, nb_edge, nb_arc, subject_id)
    if follower is None or follower not in by_id:
        return 0.0, 0.0
    f = by_id[follower]
    if f.route is None:
        return 0.0, 0.0
    lead_old = dynamics.find_leader(coords, follower, f.route,
                                    config.sensing_range)
    a_old = dynamics.idm_accel(f.idm, lead_old, f.state.v,
                               config.controller.a_max_decel)
    lead_new = dynamics.find_leader(coords_moved, follower, f.route,
                                    config.sensing_range)
    a_new = dynamics.idm_accel(f.idm, lead_new, f.state.v,
                               config.controller.a_max_decel)
    return a_old, a_new


def _old_follower_effect(eid, arc, coords, by_id, subject_id, config):
    """Accelerations of the follower left behind on the current lane."""
    follower = _nearest_behind(coords, eid, arc, subject_id)
    if follower is None or follower not in by_id:
        return 0.0, 0.0
    f = by_id[follower]
    if f.route is None:
        return 0.0, 0.0
    lead_old = dynamics.find_leader(coords, follower, f.route,
                                    config.sensing_range)
    a_old = dynamics.idm_accel(f.idm, lead_old, f.state.v,
                               config.controller.a_max_decel)
    coords_wo = {a: c for a, c in coords.items() if a != subject_id}
    lead_new = dynamics.find_leader(coords_wo, follower, f.route,
                                    config.sensing_range)
    a_new = dynamics.idm_accel(f.idm, lead_new, f.state.v,
                               config.controller.a_max_decel)
    return a_old, a_new


def _nearest_behind(coords, edge_id, arc, subject_id):
    best = None
    for aid in sorted(coords):
        if aid == subject_id:
            continue
        eid, a, _, _ = coords[aid]
        if eid != edge_id or a >= arc:
            continue
        d = arc - a
        if best is None or d < best[0]:
            best = (d, aid)
    return best[1] if best else None


def read_simlog_csv(csv_path, sidecar=None):
    """Reconstruct a SimLog from its CSV (and optional sidecar dict)."""
    per_agent = {}
    scene_id, variant = "", 0
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        for line in fh:
            f = line.rstrip("\n").split(",")
            scene_id = f[idx["scene_id"]]
            variant = int(f[idx["variant"]])
            aid = int(f[idx["agent_id"]])
            rec = per_agent.setdefault(aid, {"label": f[idx["label"]],
                                             "rows": []})
            rec["rows"].append([float(f[idx[c]]) for c in
                                ("t", "x", "y", "v", "psi", "a", "phi")])
    side_agents = {}
    dt = 0.1
    master_seed, cfg_digest = 0, ""
    if sidecar:
        dt = float(sidecar.get("dt", dt))
        master_seed = sidecar.get("master_seed", 0)
        cfg_digest = sidecar.get("config_digest", "")
        side_agents = {a["agent_id"]: a for a in sidecar.get("agents", [])}
    agents = []
    for aid in sorted(per_agent):
        rows = np.asarray(per_agent[aid]["rows"])
        if len(rows) > 1:
            dt_csv = float(rows[1, 0] - rows[0, 0])
            if not sidecar and dt_csv > 0:
                dt = dt_csv
        meta = side_agents.get(aid, {})
        agents.append(AgentLog(
            agent_id=aid, label=per_agent[aid]["label"],
            route_edges=meta.get("route_edges", []),
            idm=meta.get("idm", {}), epsilon=meta.get("epsilon", 0.0),
            exit_step=meta.get("exit_step"),
            t=rows[:, 0], x=rows[:, 1], y=rows[:, 2], v=rows[:, 3],
            psi=rows[:, 4], a=rows[:, 5], phi=rows[:, 6],
            x_lat=np.zeros(len(rows)),
            lane_changes=[(c["step"], c["from_edge"], c["to_edge"])
                          for c in meta.get("lane_changes", [])],
        ))
    return SimLog(scene_id, variant, dt, master_seed, cfg_digest, agents)


def run_dataset(scenes, pool, config, jobs=1):
    """Simulate every scene's behavior variants.

    Returns (logs, failures); failures are (scene_id, message) pairs for
    scenes that raised, which are skipped without aborting the batch.
    Results are byte-identical for any ``jobs`` value.
    """
    config.validate()
    if not scenes:
        raise ValueError("no scenes to simulate")
    tasks = [(scene, pool, config) for scene in scenes]
    if jobs > 1 and len(scenes) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_scene_worker, tasks, chunksize=1))
    else:
        results = [_scene_worker(t) for t in tasks]
    logs, failures = [], []
    for scene_logs, scene_failures in results:
        logs.extend(scene_logs)
        failures.extend(scene_failures)
    return logs, failures


def _scene_worker(task):
    scene, pool, config = task
    logs, failures = [], []
    try:
        variants = behavior_mod.sample_behaviors(
            scene, scene.graph, pool,
            derive_seed(config.master_seed, scene.scene_id),
            config.max_variants, config.horizon_dist, config.max_routes,
            config.profile_noise_std)
        for vi, assignment in enumerate(variants):
            logs.append(simulate_scene(scene, assignment, config, vi))
    except Exception as exc:
        failures.append((scene.scene_id, f"{type(exc).__name__}: {exc}"))
    return logs, failures
