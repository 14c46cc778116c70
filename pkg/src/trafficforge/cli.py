"""Command-line front end.

Subcommands: build-graph, profile-pool, simulate, render, metrics.
Exit codes: 0 success, 1 validation error, 2 runtime error. All
randomized paths take an explicit --seed so reruns are byte-identical.
The TRAFFICFORGE_LOG environment variable sets the log level.
"""

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from trafficforge import behavior, bev_render, metrics, road_graph
from trafficforge import scene_ingest, sim_engine
from trafficforge.config import apply_overrides, validate_config
from trafficforge.errors import ConfigError, TrafficForgeError

log = logging.getLogger("trafficforge")


def _setup_logging():
    level = os.environ.get("TRAFFICFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_json(path, what):
    if not os.path.exists(path):
        raise ConfigError([f"{what} file not found: {path}"])
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{what} file {path}: invalid JSON ({exc})"])


def _tracklet_paths(path):
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
        if not names:
            raise ConfigError([f"no .json tracklet files in {path}"])
        return [os.path.join(path, n) for n in names]
    if not os.path.exists(path):
        raise ConfigError([f"tracklets file not found: {path}"])
    return [path]


def _resolve_config(args):
    raw = _load_json(args.config, "config") if args.config else {}
    raw = apply_overrides(raw, getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        raw.setdefault("sim", {})["master_seed"] = args.seed
    if getattr(args, "ego", None):
        raw.setdefault("sim", {})["ego"] = args.ego
    return validate_config(raw)


def _emit(doc, out, pretty):
    text = json.dumps(doc, indent=2, sort_keys=True) if pretty \
        else json.dumps(doc, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def cmd_build_graph(args):
    cfg = _resolve_config(args)
    spec = _load_json(args.map, "map")
    graph = road_graph.build_graph(
        spec, cfg["road.join_tolerance"], cfg["road.default_lane_width"])
    doc = {
        "nodes": [{"id": n.id, "x": float(n.position[0]),
                   "y": float(n.position[1])}
                  for n in (graph.nodes[i] for i in sorted(graph.nodes))],
        "edges": [{"id": e.id, "from": e.from_node, "to": e.to_node,
                   "length": e.length, "lane_width": e.lane_width,
                   "one_way": e.one_way,
                   "left_neighbor": e.left_neighbor,
                   "right_neighbor": e.right_neighbor,
                   "polyline": [[float(x), float(y)] for x, y in e.polyline]}
                  for e in (graph.edges[i] for i in sorted(graph.edges))],
    }
    _emit(doc, args.out, args.pretty)
    return 0


def cmd_profile_pool(args):
    cfg = _resolve_config(args)
    trajs = []
    for path in args.tracklets:
        doc = _load_json(path, "tracklets")
        _, tracks = scene_ingest.load_tracklets(doc)
        for tr in tracks:
            trajs.append(np.array([[p.t, p.position[0], p.position[1]]
                                   for p in tr.poses]))
    pool = behavior.build_profile_pool(
        trajs, args.dt,
        math.radians(cfg["road.straight_threshold_deg"]))
    if pool.skipped:
        log.warning("skipped %d trajectories: %s", len(pool.skipped),
                    pool.skipped)
    if len(pool) == 0:
        raise ConfigError(["no usable trajectories for the profile pool"])
    with open(args.out, "w") as fh:
        fh.write(pool.to_json() + "\n")
    return 0


def _load_scenes(args, cfg):
    map_doc = _load_json(args.map, "map")
    graph = road_graph.build_graph(
        map_doc, cfg["road.join_tolerance"], cfg["road.default_lane_width"])
    scenes = []
    for path in _tracklet_paths(args.tracklets):
        doc = _load_json(path, "tracklets")
        scene_id, tracks = scene_ingest.load_tracklets(doc)
        scenes.append(scene_ingest.instantiate_agents(
            graph, tracks, args.t0, scene_id,
            cfg["behavior.min_spawn_gap"], cfg["road.max_snap_distance"]))
    return scenes


def cmd_simulate(args):
    cfg = _resolve_config(args)
    sim_cfg = cfg.sim_config().validate()
    pool = behavior.ProfilePool.from_json(_load_json(args.pool, "pool"))
    scenes = _load_scenes(args, cfg)

    logs, failures = sim_engine.run_dataset(scenes, pool, sim_cfg,
                                            jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    for simlog in logs:
        stem = f"{simlog.scene_id}_v{simlog.variant_index}"
        with open(os.path.join(args.out, stem + ".csv"), "w") as fh:
            simlog.write_csv(fh)
        with open(os.path.join(args.out, stem + ".json"), "w") as fh:
            json.dump(simlog.sidecar(), fh, sort_keys=True)
            fh.write("\n")
    summary = {"n_logs": len(logs),
               "failures": [{"scene_id": s, "error": e} for s, e in failures]}
    with open(os.path.join(args.out, "run.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True)
        fh.write("\n")
    if failures:
        log.warning("%d scene(s) failed", len(failures))
    return 0


def _load_logs(logs_dir):
    if not os.path.isdir(logs_dir):
        raise ConfigError([f"logs directory not found: {logs_dir}"])
    logs = []
    for name in sorted(os.listdir(logs_dir)):
        if not name.endswith(".csv"):
            continue
        side_path = os.path.join(logs_dir, name[:-4] + ".json")
        sidecar = None
        if os.path.exists(side_path):
            with open(side_path) as fh:
                sidecar = json.load(fh)
        logs.append(sim_engine.read_simlog_csv(
            os.path.join(logs_dir, name), sidecar))
    if not logs:
        raise ConfigError([f"no simulation CSVs in {logs_dir}"])
    return logs


def _render_one(task):
    simlog, map_doc, grid, t_obs, stride, out_dir, road_cfg = task
    graph = road_graph.build_graph(map_doc, road_cfg["join_tolerance"],
                                   road_cfg["default_lane_width"])
    ego = min(ag.agent_id for ag in simlog.agents)
    ego_log = next(ag for ag in simlog.agents if ag.agent_id == ego)
    spec = bev_render.GridSpec.centered_on(
        (ego_log.x[0], ego_log.y[0]), grid["H"], grid["W"],
        grid["resolution"])
    context = bev_render.render_context(graph, spec)
    return bev_render.export_sequence(simlog, context, spec, t_obs,
                                      stride, out_dir)


def cmd_render(args):
    cfg = _resolve_config(args)
    grid = dict(cfg.raw["grid"])
    if args.spec:
        try:
            user = json.loads(args.spec)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"--spec: invalid JSON ({exc})"])
        alias = {"res": "resolution"}
        for k, v in user.items():
            grid[alias.get(k, k)] = v
    t_obs = args.t_obs if args.t_obs is not None else grid["t_obs"]
    stride = args.stride if args.stride is not None else grid["stride"]
    if t_obs < 1:
        raise ConfigError(["--t-obs must be >= 1"])
    map_doc = _load_json(args.map, "map")
    logs = _load_logs(args.logs)

    os.makedirs(args.out, exist_ok=True)
    tasks = [(simlog, map_doc, grid, t_obs, stride, args.out,
              cfg.raw["road"]) for simlog in logs]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_render_one, tasks, chunksize=1))
    else:
        results = [_render_one(t) for t in tasks]
    n_files = sum(len(r) for r in results)
    log.info("wrote %d grid samples", n_files)
    return 0


def _prediction_sets(path):
    if not os.path.exists(path):
        raise ConfigError([f"predictions file not found: {path}"])
    psets = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            dt = float(doc["dt"])
            gt = metrics.Trajectory2D(dt, doc["gt"])
            samples = [metrics.Trajectory2D(dt, s) for s in doc["samples"]]
            psets.append(metrics.PredictionSet(int(doc["agent_id"]),
                                               gt, samples))
    if not psets:
        raise ConfigError([f"no prediction records in {path}"])
    return psets


def cmd_metrics(args):
    cfg = _resolve_config(args)
    report = {}
    if args.preds:
        psets = _prediction_sets(args.preds)
        horizons = [float(h) for h in args.horizons.split(",")]
        per_h = {}
        for h in horizons:
            ades, fdes, nlls = [], [], []
            for ps in psets:
                steps = int(round(h / ps.ground_truth.dt))
                if steps < 1 or steps >= len(ps.ground_truth.points):
                    continue
                ades.append(metrics.min_over_samples(ps, "ade", steps))
                fdes.append(metrics.min_over_samples(ps, "fde", steps))
                if len(ps.samples) >= 2:
                    nlls.append(metrics.nll(ps, steps))
            if ades:
                per_h[f"{h:.1f}"] = {
                    "ade": float(np.mean(ades)),
                    "fde": float(np.mean(fdes)),
                    "nll": float(np.mean(nlls)) if nlls else None,
                    "n_agents": len(ades),
                }
        report["prediction"] = per_h
    if args.logs:
        logs = _load_logs(args.logs)
        trajs = []
        for simlog in logs:
            for ag in simlog.agents:
                pts = np.column_stack([ag.x, ag.y])
                if len(pts) >= 3:
                    trajs.append(metrics.Trajectory2D(simlog.dt, pts))
        div = metrics.diversity_report(trajs)
        report["diversity"] = div.to_dict()
        if args.map:
            map_doc = _load_json(args.map, "map")
            graph = road_graph.build_graph(
                map_doc, cfg["road.join_tolerance"],
                cfg["road.default_lane_width"])
            report["validity_ratio"] = metrics.validity_ratio(trajs, graph)
    if not report:
        raise ConfigError(["metrics needs --preds and/or --logs"])
    _emit(report, args.out, args.pretty)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trafficforge",
        description="Deterministic multi-agent driving-scenario simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (dotted key)")
        p.add_argument("--pretty", action="store_true",
                       help="indent JSON output")
        p.add_argument("--out", help="output path (default: stdout)")
        if seed:
            p.add_argument("--seed", type=int, required=True,
                           help="master seed (required for reproducibility)")

    p = sub.add_parser("build-graph", help="build and dump the lane graph")
    p.add_argument("--map", required=True)
    common(p)
    p.set_defaults(fn=cmd_build_graph)

    p = sub.add_parser("profile-pool",
                       help="mine a velocity-profile pool from tracklets")
    p.add_argument("--tracklets", nargs="+", required=True)
    p.add_argument("--dt", type=float, default=0.1)
    common(p)
    p.set_defaults(fn=cmd_profile_pool)
    p.set_defaults(out_required=True)

    p = sub.add_parser("simulate", help="simulate scenes to CSV logs")
    p.add_argument("--map", required=True)
    p.add_argument("--tracklets", required=True,
                   help="tracklet JSON file or directory of files")
    p.add_argument("--pool", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--ego", choices=["replay", "simulate"])
    p.add_argument("--jobs", type=int, default=1)
    common(p, seed=True)
    p.set_defaults(fn=cmd_simulate, out_required=True)

    p = sub.add_parser("render", help="rasterize logs into grid samples")
    p.add_argument("--logs", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--spec", help='grid geometry, e.g. {"H":256,"W":256,"res":0.5}')
    p.add_argument("--t-obs", dest="t_obs", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(fn=cmd_render, out_required=True)

    p = sub.add_parser("metrics", help="evaluate predictions and logs")
    p.add_argument("--preds", help="JSONL prediction file")
    p.add_argument("--logs", help="directory of simulation CSVs")
    p.add_argument("--map", help="map for validity checks")
    p.add_argument("--horizons", default="1,2,3,4,5")
    common(p)
    p.set_defaults(fn=cmd_metrics)

    return parser


def dispatch(argv):
    """Run one CLI invocation; returns the process exit status."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    if getattr(args, "out_required", False) and not args.out:
        sys.stderr.write("error: --out is required for this command\n")
        return 1
    try:
        return args.fn(args)
    except ConfigError as exc:
        for v in exc.violations:
            sys.stderr.write(f"error: {v}\n")
        return 1
    except TrafficForgeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:  # runtime failures
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
