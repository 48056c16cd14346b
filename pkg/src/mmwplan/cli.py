"""Command-line pipeline driver.

Subcommands mirror the pipeline stages: generate a synthetic scene,
classify a cloud, detect pole sites, test line of sight, plan the network,
sweep demand multipliers, or serve the what-if HTTP API.  Each stage reads
the previous stage's output format and prints a one-line summary.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import cloud as cloudmod
from .classify import PcaParams, classify_cloud
from .los import LosParams, all_los, load_los, save_los
from .poles import DetectionParams, detect_poles, load_sites, save_sites
from .streets import load_ways, osm_filter, remove_ground_and_far


def _dataclass_from_config(cls, block: dict):
    obj = cls()
    for key, value in (block or {}).items():
        if not hasattr(obj, key):
            raise SystemExit(f"config: unknown {cls.__name__} field {key!r}")
        setattr(obj, key, value)
    return obj


def load_config(path) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _prepare_grids(cloud_path, ways_path, max_dist):
    cloud = cloudmod.load_cloud(cloud_path)
    grid = cloudmod.build_grid(cloud)
    grid.classified = bool(len(cloud)) and bool((cloud.classes != 0).any())
    if ways_path:
        osm_filter(grid, load_ways(ways_path), max_dist)
    working = remove_ground_and_far(grid)
    return grid, working


def cmd_generate(args) -> int:
    from .synth import SceneSpec, generate_scene, write_scene

    spec = SceneSpec(
        n_poles=args.poles,
        n_trees=args.trees,
        n_walls=args.walls,
        area=args.area,
        spacing=args.spacing,
        seed=args.seed,
    )
    t0 = time.time()
    scene = generate_scene(spec)
    paths = write_scene(scene, args.out)
    print(
        f"generate: {len(scene.cloud)} points, {spec.n_poles} poles, "
        f"{spec.n_trees} trees, {spec.n_walls} walls -> {args.out} "
        f"({time.time() - t0:.1f}s)"
    )
    for name, p in paths.items():
        print(f"  {name}: {p}")
    return 0


def cmd_classify(args) -> int:
    config = load_config(args.config)
    params = _dataclass_from_config(PcaParams, config.get("pca"))
    t0 = time.time()
    cloud = cloudmod.load_cloud(args.cloud)
    if args.downsample > 0 and len(cloud):
        cloud = cloudmod.downsample(cloud, args.downsample)
    grid = cloudmod.build_grid(cloud)
    classify_cloud(grid, params)
    cloudmod.save_cloud(cloud, args.out, labeled=True)
    counts = {}
    for c in cloud.classes:
        counts[cloudmod.CLASS_TOKENS[cloudmod.PointClass(int(c))]] = counts.get(
            cloudmod.CLASS_TOKENS[cloudmod.PointClass(int(c))], 0
        ) + 1
    print(f"classify: {len(cloud)} points -> {args.out} {counts} ({time.time() - t0:.1f}s)")
    return 0


def cmd_detect(args) -> int:
    config = load_config(args.config)
    params = _dataclass_from_config(DetectionParams, config.get("detection"))
    max_dist = config.get("osm_max_dist", 20.0)
    t0 = time.time()
    grid, working = _prepare_grids(args.cloud, args.ways, max_dist)
    if not grid.classified:
        raise SystemExit("detect: input cloud carries no class labels; run classify first")
    sites = detect_poles(working, grid, params)
    save_sites(sites, args.out)
    print(f"detect: {len(sites)} candidate sites -> {args.out} ({time.time() - t0:.1f}s)")
    return 0


def cmd_los(args) -> int:
    config = load_config(args.config)
    params = _dataclass_from_config(LosParams, config.get("los"))
    t0 = time.time()
    cloud = cloudmod.load_cloud(args.cloud)
    grid = cloudmod.build_grid(cloud)
    sites = load_sites(args.sites)
    if args.pops:
        with open(args.pops, "r", encoding="utf-8") as fh:
            pops = json.load(fh)
        from .poles import SiteCandidate

        for k, p in enumerate(pops, start=1):
            pid = str(p.get("id") or f"pop-{k:03d}")
            if any(s.id == pid for s in sites):
                continue
            if "x" in p and "y" in p:
                sites.append(
                    SiteCandidate(id=pid, x=float(p["x"]), y=float(p["y"]),
                                  mount_z=float(p.get("mount_z", 8.0)), kind="POP")
                )
    pair_filter = None
    if args.buildings:
        from .los import polygon_prefilter

        with open(args.buildings, "r", encoding="utf-8") as fh:
            buildings = json.load(fh)
        pair_filter = set(polygon_prefilter(sites, buildings, params))
    edges = all_los(grid, sites, params)
    if pair_filter is not None:
        edges = [e for e in edges if (e.site_a, e.site_b) in pair_filter]
    save_los(edges, args.out)
    print(f"los: {len(edges)} links among {len(sites)} sites -> {args.out} ({time.time() - t0:.1f}s)")
    return 0


def _load_problem_from_args(args, config):
    from .topology import NetworkConfig, build_network, load_problem

    if args.problem:
        return load_problem(args.problem)
    if not (args.sites and args.los and args.pops and args.demands):
        raise SystemExit("plan: provide either --problem or all of --sites/--los/--pops/--demands")
    net_cfg = _dataclass_from_config(NetworkConfig, config.get("network"))
    sites = load_sites(args.sites)
    edges = load_los(args.los)
    with open(args.pops, "r", encoding="utf-8") as fh:
        pops = json.load(fh)
    with open(args.demands, "r", encoding="utf-8") as fh:
        demands = json.load(fh)
    cns = []
    if args.cns:
        with open(args.cns, "r", encoding="utf-8") as fh:
            cns = json.load(fh)
    return build_network(
        sites, edges, pops, demands, cns=cns, config=net_cfg,
        objective=args.objective, budget=args.budget,
    )


def _controls(args, config):
    from .solve import SolveControls

    controls = _dataclass_from_config(SolveControls, config.get("solve"))
    if args.gap is not None:
        controls.gap_target = args.gap
    if args.time_limit is not None:
        controls.time_limit = args.time_limit
    return controls


def cmd_plan(args) -> int:
    from .network import build_mip
    from .plans import compute_metrics, plan_geojson, save_plan
    from .solve import branch_and_bound, two_stage_solve

    config = load_config(args.config)
    t0 = time.time()
    problem = _load_problem_from_args(args, config)
    controls = _controls(args, config)
    if args.method == "two-stage":
        plan = two_stage_solve(problem, controls)
    else:
        plan = branch_and_bound(build_mip(problem), controls)
    save_plan(plan, args.out)
    metrics = compute_metrics(problem, plan)
    if args.geojson:
        with open(args.geojson, "w", encoding="utf-8") as fh:
            json.dump(plan_geojson(problem, plan), fh, indent=2)
            fh.write("\n")
    print(
        f"plan: {plan.status}, objective {plan.objective_value:.2f}, gap {plan.gap:.3f}, "
        f"{len(plan.active_sites)} sites, {len(plan.active_sectors)} sectors "
        f"-> {args.out} ({time.time() - t0:.1f}s)"
    )
    print(f"  metrics: {metrics.to_dict()}")
    return 0 if plan.status in ("optimal", "feasible") else 1


def cmd_sensitivity(args) -> int:
    from .sensitivity import run_sensitivity
    from .topology import load_problem

    config = load_config(args.config)
    problem = load_problem(args.problem)
    controls = _controls(args, config)
    multipliers = [float(tok) for tok in args.multipliers.split(",")]
    rows = run_sensitivity(problem, multipliers, controls, method=args.method,
                           log=lambda line: print(line, flush=True))
    payload = [r.to_dict() for r in rows]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"sensitivity: {len(rows)} rows -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .service import PlannerService
    from .topology import load_problem

    config = load_config(args.config)
    problem = load_problem(args.problem)
    controls = _controls(args, config)
    service = PlannerService(problem, controls)
    print(f"serving what-if API on port {args.port} (ctrl-c to stop)")
    service.serve_forever(args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmwplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scene with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--poles", type=int, default=20)
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--walls", type=int, default=5)
    p.add_argument("--area", type=float, default=170.0)
    p.add_argument("--spacing", type=float, default=0.07)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("classify", help="label a cloud by neighborhood PCA")
    p.add_argument("--cloud", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--downsample", type=float, default=0.10,
                   help="min point spacing in meters; 0 disables")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("detect", help="detect pole sites on a labeled cloud")
    p.add_argument("--cloud", required=True, help="labeled cloud from classify")
    p.add_argument("--out", required=True)
    p.add_argument("--ways", help="street ways JSON for proximity filtering")
    p.add_argument("--config")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("los", help="line-of-sight links between sites")
    p.add_argument("--cloud", required=True, help="labeled cloud (obstruction source)")
    p.add_argument("--sites", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pops", help="extra POP sites JSON to include")
    p.add_argument("--buildings", help="building polygons for the OSM-style prefilter")
    p.add_argument("--config")
    p.set_defaults(func=cmd_los)

    p = sub.add_parser("plan", help="solve the network design problem")
    p.add_argument("--problem", help="complete problem JSON")
    p.add_argument("--sites")
    p.add_argument("--los")
    p.add_argument("--pops")
    p.add_argument("--demands")
    p.add_argument("--cns")
    p.add_argument("--out", required=True)
    p.add_argument("--geojson")
    p.add_argument("--objective", choices=["min_cost", "max_coverage"], default="min_cost")
    p.add_argument("--budget", type=float, default=0.0)
    p.add_argument("--method", choices=["direct", "two-stage"], default="direct")
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--config")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sensitivity", help="demand-multiplier sweep (stop: gap or time)")
    p.add_argument("--problem", required=True)
    p.add_argument("--multipliers", default="1,2,4,8")
    p.add_argument("--out")
    p.add_argument("--method", choices=["direct", "two-stage"], default="two-stage")
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--config")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("serve", help="HTTP what-if service for the web UI")
    p.add_argument("--problem", required=True)
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
