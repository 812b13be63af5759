"""Randomized verification suites shared by the CLI and the acceptance tests.

Every suite is deterministic for a fixed base seed; on failure it reports
the per-case seed so the case can be replayed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import baselines, breakable, partitioner, quadrature, segrender
from .field import ConstantBox, GaussianBlob, GaussianBlobs, Scene, SumField
from .geometry import Aabb, Ray, unit, vec3
from .scenes import two_walls, voxel_room

ROOT = Aabb([-1, -1, -1], [1, 1, 1])


@dataclass
class SuiteResult:
    name: str
    cases: int
    passed: bool
    message: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = f": {self.message}" if self.message else ""
        return f"[{status}] {self.name} ({self.cases} cases){tail}"


def random_scene(rng: np.random.Generator) -> Scene:
    blobs = tuple(
        GaussianBlob(
            rng.uniform(-0.8, 0.8, size=3),
            rng.uniform(0.5, 12.0),
            rng.uniform(0.12, 0.5),
            rng.uniform(0.0, 1.0, size=3),
        )
        for _ in range(rng.integers(1, 4))
    )
    field = GaussianBlobs(blobs)
    if rng.random() < 0.3:
        lo = rng.uniform(-0.9, 0.2, size=3)
        hi = lo + rng.uniform(0.3, 0.8, size=3)
        box = ConstantBox(
            Aabb(lo, np.minimum(hi, 1.0)), rng.uniform(0.2, 8.0), rng.uniform(0.0, 1.0, size=3)
        )
        field = SumField((field, box))
    return Scene(ROOT, field, vec3(0.0, 0.0, 0.0))


def random_ray(rng: np.random.Generator, root: Aabb = ROOT) -> Ray:
    for _ in range(64):
        origin = rng.uniform(-2.4, 2.4, size=3)
        target = rng.uniform(root.mn * 0.8, root.mx * 0.8)
        d = target - origin
        if np.linalg.norm(d) < 1e-6:
            continue
        ray = Ray(origin, unit(d), 0.0, 20.0)
        if quadrature.ray_box_intersect(ray, root) is not None:
            return ray
    raise RuntimeError("could not draw a ray hitting the root box")


def random_filled_samples(rng: np.random.Generator):
    """A random scene, a random ray through it, and its evaluated bins."""
    scene = random_scene(rng)
    ray = random_ray(rng)
    dt = float(rng.uniform(0.02, 0.12))
    samples = quadrature.generate_samples(ray, ROOT, dt)
    quadrature.fill_samples(scene.field, ray, samples)
    return scene, ray, samples


def random_cut_indices(rng: np.random.Generator, n: int, max_segments: int = 8):
    k = int(rng.integers(1, max_segments + 1))
    k = min(k, n)
    if k <= 1 or n < 2:
        return []
    return sorted(rng.choice(np.arange(1, n), size=k - 1, replace=False).tolist())


def _case_seed(seed: int, i: int) -> int:
    return seed * 1_000_003 + i


def suite_partition_equivalence(cases: int = 1000, seed: int = 0) -> SuiteResult:
    """Composed segment rendering equals the monolithic pass on random cuts."""
    for i in range(cases):
        case_seed = _case_seed(seed, i)
        rng = np.random.default_rng(case_seed)
        _, _, samples = random_filled_samples(rng)
        if not samples:
            continue
        cuts = random_cut_indices(rng, len(samples))
        whole = quadrature.composite_samples(samples)
        segs = [
            segrender.aggregate_segment(None, None, run)
            for run in breakable.split_runs(samples, cuts)
        ]
        composed = segrender.compose_render(segs)
        checks = [
            (composed.color, whole.color),
            (composed.alpha, whole.alpha),
            (composed.depth, whole.depth),
            (composed.transmittance, whole.transmittance),
        ]
        for got, want in checks:
            if not breakable.values_close(want, got, 1e-10):
                return SuiteResult(
                    "partition_equivalence", i + 1, False, f"case seed {case_seed}: {got} != {want}"
                )
    return SuiteResult("partition_equivalence", cases, True)


def suite_distortion_equivalence(cases: int = 1000, seed: int = 0) -> SuiteResult:
    """Composed distortion equals the O(N^2) pairwise oracle on random cuts."""
    for i in range(cases):
        case_seed = _case_seed(seed, i)
        rng = np.random.default_rng(case_seed)
        _, _, samples = random_filled_samples(rng)
        if not samples:
            continue
        cuts = random_cut_indices(rng, len(samples))
        whole = quadrature.composite_samples(samples)
        segs = [
            segrender.aggregate_segment(None, None, run)
            for run in breakable.split_runs(samples, cuts)
        ]
        loss = segrender.compose_distortion(segs)
        if abs(loss - whole.distortion) > 1e-9 * (1.0 + abs(whole.distortion)):
            return SuiteResult(
                "distortion_equivalence",
                i + 1,
                False,
                f"case seed {case_seed}: {loss} != {whole.distortion}",
            )
    return SuiteResult("distortion_equivalence", cases, True)


def suite_breakable(cases: int = 1000, seed: int = 0) -> SuiteResult:
    """All shipped breakable instances are split-invariant on random cuts."""
    specs = breakable.shipped_instances()
    for i in range(cases):
        case_seed = _case_seed(seed, i)
        rng = np.random.default_rng(case_seed)
        _, _, samples = random_filled_samples(rng)
        if len(samples) < 2:
            continue
        cuts = random_cut_indices(rng, len(samples))
        for spec in specs:
            if not breakable.check_split_invariance(spec, samples, cuts):
                return SuiteResult(
                    "breakable_split_invariance", i + 1, False, f"case seed {case_seed}: {spec.name}"
                )
    return SuiteResult("breakable_split_invariance", cases, True)


def suite_gradient_locality(params: int = 20, seed: int = 0, h: float = 1e-4) -> SuiteResult:
    """Local (cached-neighbors) gradients match global finite differences."""
    bundle = voxel_room()
    tree = partitioner.build_tree(bundle.points, bundle.scene.root_box, bundle.depth)
    probe = segrender.DistributedLossProbe(bundle.scene, tree, bundle.rays, bundle.dt)
    grid = bundle.scene.field
    rng = np.random.default_rng(seed)
    checked = 0
    for i in range(params * 20):
        if checked == params:
            break
        ray = bundle.rays[rng.integers(0, len(bundle.rays))]
        t = rng.uniform(0.5, 2.2)
        p = ray.point_at(t)
        if not grid.box.contains(p):
            continue
        idx = tuple(
            int(v)
            for v in np.clip(
                np.floor((p - grid.box.mn) / (grid.box.size / np.array(grid.resolution))),
                0,
                np.array(grid.resolution) - 1,
            )
        )
        owner = partitioner.locate(tree, grid.voxel_center(idx))
        local, global_ = probe.gradient_pair(owner, segrender.ParamRef(owner, idx), h)
        if abs(local - global_) > 1e-6 * (1.0 + abs(global_)):
            return SuiteResult(
                "gradient_locality", checked + 1, False, f"voxel {idx}: {local} vs {global_}"
            )
        checked += 1
    return SuiteResult("gradient_locality", checked, True)


def suite_blend_deviation() -> SuiteResult:
    """The constructed two-wall case: 3D blending deviates, tiling does not."""
    from . import distsim

    bundle = two_walls()
    tree = partitioner.build_tree(bundle.points, bundle.scene.root_box, bundle.depth)
    pool = distsim.spawn(tree, bundle.scene)
    ray = Ray((-0.5, 0.5, 0.5), (1.0, 0.0, 0.0), 0.0, 10.0)

    mono, _ = distsim.render_ray(pool, ray, "mono", bundle.dt)
    tile, _ = distsim.render_ray(pool, ray, "tile_aggregate", bundle.dt)
    tile_err = float(np.max(np.abs(tile.color - mono.color)))
    if tile_err > 1e-9:
        return SuiteResult("blending_deviation", 1, False, f"tile error {tile_err}")

    full = baselines.expand_tiles(tree, 1.0)
    blended = baselines.render_blend3d(
        list(bundle.witness_fields), full, ray, bundle.scene.root_box, bundle.dt
    )
    blend_err = float(np.max(np.abs(blended.color - mono.color)))
    if blend_err <= 0.05:
        return SuiteResult("blending_deviation", 1, False, f"blend error only {blend_err}")

    zero = baselines.expand_tiles(tree, 0.0)
    collapsed = baselines.render_blend3d(
        baselines.tile_fields(bundle.scene.field, zero), zero, ray, bundle.scene.root_box, bundle.dt
    )
    collapse_err = float(np.max(np.abs(collapsed.color - mono.color)))
    if collapse_err > 1e-10 * (1.0 + float(np.max(np.abs(mono.color)))):
        return SuiteResult("blending_deviation", 1, False, f"f=0 failed to collapse: {collapse_err}")
    return SuiteResult(
        "blending_deviation", 1, True, f"blend3d err {blend_err:.3f}, tiled err {tile_err:.1e}"
    )


def run_all(cases: int = 1000, seed: int = 0, grad_params: int = 20) -> list:
    return [
        suite_partition_equivalence(cases, seed),
        suite_distortion_equivalence(cases, seed),
        suite_breakable(cases, seed),
        suite_gradient_locality(grad_params, seed),
        suite_blend_deviation(),
    ]
