#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the pure-Python fallback.

Two workloads:
  * kernel microbenchmark: the fused per-agent step math (steering chain,
    longitudinal command, bicycle integration) in a tight loop;
  * scene benchmark: a full two-agent car-following simulation, run in a
    subprocess per backend (the backend is chosen at import time).

Usage: python benchmarks/bench_kernels.py [--iters N] [--scenes N]
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time


def bench_kernels(mod, iters):
    """Time the fused hot path on one backend module."""
    phi_max = math.radians(35.0)
    psi_req_max = math.radians(45.0)
    x, y, v, psi = 0.0, 1.0, 10.0, 0.0
    t0 = time.perf_counter()
    for i in range(iters):
        x_lat = y
        phi = mod.steer_to_lane(x_lat, 0.0, 0.0, psi, v, 1.0, 2.0, 0.5,
                                psi_req_max, 4.5, phi_max)
        a_idm = mod.idm_accel(1.5, 2.0, 12.0, 4.0, 1.5, 2.0, v,
                              50.0 - 0.001 * (i % 1000), 1.0, 8.0)
        a_cmd = mod.longitudinal_command(v, 12.0, 1.0, a_idm, 8.0, 1.5)
        x, y, v, psi = mod.step_kinematics(x, y, v, psi, a_cmd, phi, 4.5, 0.1)
    return time.perf_counter() - t0


_SCENE_SNIPPET = r"""
import time
import numpy as np
from trafficforge import kernels, road_graph, scene_ingest
from trafficforge.behavior import BehaviorAssignment, VelocityProfile
from trafficforge.sim_engine import SimConfig, simulate_scene

spec = {"centerlines": [{"id": 0, "points": [[0, 0], [900, 0]],
                         "lanes": 1, "oneway": True}]}
graph = road_graph.build_graph(spec)
doc = {"scene_id": "bench", "tracks": [
    {"agent_id": 1, "poses": [{"t": 0.0, "x": 60.0, "y": 0.0,
                               "heading": 0.0, "speed": 8.0}]},
    {"agent_id": 2, "poses": [{"t": 0.0, "x": 20.0, "y": 0.0,
                               "heading": 0.0, "speed": 12.0}]},
]}
sid, tracks = scene_ingest.load_tracklets(doc)
scene = scene_ingest.instantiate_agents(graph, tracks, 0.0, sid)
assignment = {}
for agent in scene.agents:
    route = road_graph.enumerate_routes(graph, agent.lane,
                                        horizon_dist=900.0)[0]
    speed = 8.0 if agent.agent_id == 1 else 16.0
    assignment[agent.agent_id] = BehaviorAssignment(
        agent.agent_id, route, "straight",
        VelocityProfile(0.1, np.full(100, speed), speed, "straight"))

N = int(__import__("sys").argv[1])
t0 = time.perf_counter()
for i in range(N):
    simulate_scene(scene, assignment, SimConfig(master_seed=i), 0)
dt = time.perf_counter() - t0
print(f"{kernels.BACKEND} {dt:.6f}")
"""


def bench_scenes(purepy, n_scenes):
    env = dict(os.environ)
    if purepy:
        env["TRAFFICFORGE_PUREPY"] = "1"
    else:
        env.pop("TRAFFICFORGE_PUREPY", None)
    out = subprocess.run([sys.executable, "-c", _SCENE_SNIPPET,
                          str(n_scenes)],
                         capture_output=True, text=True, env=env, check=True)
    backend, seconds = out.stdout.split()
    return backend, float(seconds)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=2_000_000,
                    help="kernel microbenchmark iterations")
    ap.add_argument("--scenes", type=int, default=300,
                    help="two-agent scenes per backend")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    rows = []
    from trafficforge import _pykernels
    t_py = bench_kernels(_pykernels, args.iters)
    rows.append(("kernel loop", "python", t_py,
                 args.iters / t_py / 1e6))
    try:
        from trafficforge import _corekernels
        t_cy = bench_kernels(_corekernels, args.iters)
        rows.append(("kernel loop", "compiled", t_cy,
                     args.iters / t_cy / 1e6))
    except ImportError:
        print("compiled backend not built; kernel comparison skipped",
              file=sys.stderr)

    backend, t = bench_scenes(purepy=True, n_scenes=args.scenes)
    rows.append(("scene sim", backend, t, args.scenes / t))
    backend, t = bench_scenes(purepy=False, n_scenes=args.scenes)
    rows.append(("scene sim", backend, t, args.scenes / t))

    if args.json:
        print(json.dumps([{"workload": w, "backend": b, "seconds": s,
                           "rate": r} for w, b, s, r in rows]))
        return

    print(f"{'workload':<12} {'backend':<9} {'seconds':>9} {'rate':>14}")
    for w, b, s, r in rows:
        unit = "Msteps/s" if w == "kernel loop" else "scenes/s"
        print(f"{w:<12} {b:<9} {s:>9.3f} {r:>10.2f} {unit}")
    by = {(w, b): s for w, b, s, _ in rows}
    if ("kernel loop", "compiled") in by:
        speedup = by[("kernel loop", "python")] / by[("kernel loop",
                                                      "compiled")]
        print(f"kernel speedup: {speedup:.1f}x")
    if ("scene sim", "compiled") in by and ("scene sim", "python") in by:
        speedup = by[("scene sim", "python")] / by[("scene sim", "compiled")]
        print(f"scene speedup:  {speedup:.2f}x")


if __name__ == "__main__":
    main()
