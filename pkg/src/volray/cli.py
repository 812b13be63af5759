"""Command-line front end: render, partition, verify, bench, scene.

Exit codes: 0 success, 1 failed verification property, 2 configuration
error, 3 I/O error, 4 degenerate split.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, distsim, partitioner, scenes, verify
from .field import Scene, load_scene, save_scene
from .geometry import Aabb, Ray, vec3
from .partitioner import DegenerateSplitError, InsufficientPointsError, NoPointsError


def _parse_rgb(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected r,g,b got {text!r}")
    return vec3(parts)


def _parse_box(text: str) -> Aabb:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 6:
        raise ValueError(f"expected x0,y0,z0,x1,y1,z1 got {text!r}")
    return Aabb(parts[:3], parts[3:])


def _load_scene_arg(path: str) -> Scene:
    if path.startswith("builtin:"):
        return scenes.load_builtin(path[len("builtin:"):]).scene
    return load_scene(path)


def _load_camera_arg(args) -> distsim.Camera:
    if args.camera:
        return distsim.Camera.from_json(json.loads(Path(args.camera).read_text()))
    if args.scene.startswith("builtin:"):
        return scenes.load_builtin(args.scene[len("builtin:"):]).camera
    raise ValueError("--camera is required unless the scene is a builtin")


def _load_rays(path: str) -> list:
    data = json.loads(Path(path).read_text())
    return [Ray.from_json(r) for r in data["rays"]]


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("VOLRAY_THREADS", "1"))


def cmd_render(args) -> int:
    scene = _load_scene_arg(args.scene)
    camera = _load_camera_arg(args)
    if args.tree:
        tree = partitioner.load_tree(args.tree)
    elif args.points is not None:
        cloud = partitioner.load_points(args.points)
        tree = partitioner.build_tree(cloud.points, scene.root_box, args.depth)
    else:
        tree = partitioner.build_tree(
            np.array([scene.root_box.mn, scene.root_box.mx]), scene.root_box, 0
        )
    pool = distsim.spawn(tree, scene)
    background = _parse_rgb(args.background) if args.background else None
    image, stats = distsim.render_image(
        pool,
        camera,
        args.protocol,
        args.dt,
        background=background,
        threads=_threads(args),
        broadcast_all=args.broadcast_all,
    )
    distsim.write_ppm(args.out, image)
    if args.stats:
        doc = distsim.stats_json(stats, distsim.canonical_protocol(args.protocol), pool.num_workers)
        Path(args.stats).write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {args.out}" + (f" and {args.stats}" if args.stats else ""))
    return 0


def cmd_partition(args) -> int:
    scene = _load_scene_arg(args.scene) if args.scene else None
    if args.from_rays:
        if scene is None and args.root_box is None:
            raise ValueError("--from-rays needs --scene or --root-box for the root box")
        root = _parse_box(args.root_box) if args.root_box else scene.root_box
        rays = _load_rays(args.from_rays)
        cloud = partitioner.rays_to_points(rays, root, args.dt, args.max_points, args.seed)
    elif args.points:
        cloud = partitioner.load_points(args.points)
        if args.root_box:
            root = _parse_box(args.root_box)
        elif scene is not None:
            root = scene.root_box
        else:
            root = partitioner.default_root_box(cloud.points)
    else:
        raise ValueError("either --points or --from-rays is required")
    tree = partitioner.build_tree(cloud.points, root, args.depth)
    partitioner.save_tree(tree, args.out)
    written = [args.out]
    if args.report or args.figure:
        report = partitioner.balance_report(tree, cloud.points)
        if args.report:
            Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
            written.append(args.report)
        if args.figure:
            from .figures import save_balance_figure

            save_balance_figure(report, args.figure)
            written.append(args.figure)
    print("wrote " + ", ".join(written))
    return 0


def cmd_verify(args) -> int:
    results = verify.run_all(cases=args.cases, seed=args.seed, grad_params=args.grad_params)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_bench(args) -> int:
    scene = _load_scene_arg(args.scene)
    camera = _load_camera_arg(args)
    tree = partitioner.load_tree(args.tree)
    pool = distsim.spawn(tree, scene)
    dts = [float(v) for v in args.dts.split(",") if v.strip()]
    if not dts:
        raise ValueError("empty dt sweep")
    report = distsim.bench_protocols(pool, camera, dts)
    with open(args.out, "w") as f:
        f.write("dt,samples_per_ray_per_worker,protocol,scalars_total\n")
        for e in report["entries"]:
            f.write(
                f"{e['dt']!r},{e['samples_per_ray_per_worker']!r},"
                f"{e['protocol']},{e['scalars_total']}\n"
            )
        if report["fit"]:
            fit = report["fit"]
            f.write(f"# ratio_fit_slope={fit['slope']!r}\n")
            f.write(f"# ratio_fit_intercept={fit['intercept']!r}\n")
            f.write(f"# ratio_model_slope={fit['model_slope']!r}\n")
            f.write(f"# slope_within_30pct={fit['slope_within_30pct']}\n")
    written = [args.out]
    if args.figure:
        from .figures import save_bench_figure

        save_bench_figure(report, args.figure)
        written.append(args.figure)
    print("wrote " + ", ".join(written))
    if report["fit"]:
        print(
            f"ratio fit slope {report['fit']['slope']:.4f} "
            f"(model {report['fit']['model_slope']:.4f})"
        )
    return 0


def cmd_scene(args) -> int:
    if args.list:
        for name in sorted(scenes.BUILTIN_SCENES):
            print(name)
        return 0
    bundle = scenes.load_builtin(args.name)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    scene_path = out_dir / f"{bundle.name}_scene.json"
    save_scene(bundle.scene, scene_path)
    written.append(scene_path)
    camera_path = out_dir / f"{bundle.name}_camera.json"
    camera_path.write_text(json.dumps(bundle.camera.to_json(), indent=2) + "\n")
    written.append(camera_path)
    if bundle.points is not None:
        points_path = out_dir / f"{bundle.name}_points.xyz"
        partitioner.save_points_xyz(bundle.points, points_path)
        written.append(points_path)
    if bundle.rays:
        rays_path = out_dir / f"{bundle.name}_rays.json"
        rays_path.write_text(
            json.dumps({"rays": [r.to_json() for r in bundle.rays]}, indent=2) + "\n"
        )
        written.append(rays_path)
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volray", description="Tiled distributed volume renderer and simulator."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render an image under one of the protocols")
    p.add_argument("--scene", required=True, help="scene JSON path or builtin:<name>")
    p.add_argument("--camera", help="camera JSON path (optional for builtin scenes)")
    p.add_argument("--tree", help="partition tree JSON")
    p.add_argument("--points", help="build the tree from this point file instead")
    p.add_argument("--depth", type=int, default=2, help="tree depth when building from points")
    p.add_argument(
        "--protocol",
        default="tile",
        choices=["mono", "sample", "tile", "sample_broadcast", "tile_aggregate"],
    )
    p.add_argument("--dt", type=float, required=True, help="quadrature step (m)")
    p.add_argument("--out", required=True, help="output PPM path")
    p.add_argument("--stats", help="output stats JSON path")
    p.add_argument("--background", help="override background as r,g,b")
    p.add_argument("--threads", type=int, default=None, help="render threads (VOLRAY_THREADS)")
    p.add_argument("--broadcast-all", action="store_true", help="replicate tile payloads to all workers")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("partition", help="build a balanced tile tree from points or rays")
    p.add_argument("--points", help="point cloud file (.ply or whitespace x y z)")
    p.add_argument("--from-rays", help="rays JSON; discretize instead of using a point file")
    p.add_argument("--scene", help="scene JSON (supplies the root box)")
    p.add_argument("--root-box", help="explicit root box x0,y0,z0,x1,y1,z1")
    p.add_argument("--depth", type=int, required=True, help="number of split levels (2^depth tiles)")
    p.add_argument("--dt", type=float, default=0.05, help="step for --from-rays discretization")
    p.add_argument("--max-points", type=int, default=100_000, help="subsample cap for --from-rays")
    p.add_argument("--seed", type=int, default=0, help="subsample seed for --from-rays")
    p.add_argument("--out", required=True, help="output tree JSON path")
    p.add_argument("--report", help="balance report JSON path")
    p.add_argument("--figure", help="balance report figure (PNG) path")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("verify", help="run the randomized verification suites")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grad-params", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="compare protocol traffic over a dt sweep")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera")
    p.add_argument("--tree", required=True)
    p.add_argument("--dts", required=True, help="comma-separated dt sweep, e.g. 0.04,0.02,0.01")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--figure", help="output figure (PNG) path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("scene", help="write a builtin scene bundle to disk")
    p.add_argument("--name", default="three_blobs")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--list", action="store_true", help="list builtin scene names")
    p.set_defaults(func=cmd_scene)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegenerateSplitError as e:
        print(f"error: degenerate split: {e}", file=sys.stderr)
        return 4
    except (InsufficientPointsError, NoPointsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
