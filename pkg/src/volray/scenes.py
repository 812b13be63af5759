"""Built-in demo scenes used by the CLI, the verification suites, and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distsim import Camera
from .field import ConstantBox, GaussianBlob, GaussianBlobs, Scene, VoxelGrid
from .geometry import Aabb, Ray, unit, vec3


@dataclass(frozen=True)
class SceneBundle:
    name: str
    scene: Scene
    camera: Camera
    dt: float
    depth: int
    points: np.ndarray = None  # partition input, when the scene ships one
    rays: tuple = ()  # training-style rays, when the scene ships them
    witness_fields: tuple = ()  # alternative per-tile reconstructions


def _mixture_points(blobs, box: Aabb, n: int, seed: int) -> np.ndarray:
    """Sample points from the blob mixture, rejecting those outside the box."""
    rng = np.random.default_rng(seed)
    out = []
    remaining = n
    while remaining > 0:
        pick = rng.integers(0, len(blobs), size=remaining * 2)
        centers = np.array([blobs[i].center for i in pick])
        scales = np.array([blobs[i].scale for i in pick])
        pts = centers + rng.normal(size=(remaining * 2, 3)) * scales[:, None]
        inside = box.contains_many(pts)
        pts = pts[inside][:remaining]
        out.append(pts)
        remaining -= pts.shape[0]
    return np.concatenate(out, axis=0)


def three_blobs() -> SceneBundle:
    """Three colored Gaussian blobs in the unit-ish cube; white background."""
    root = Aabb([-1, -1, -1], [1, 1, 1])
    blobs = (
        GaussianBlob((-0.45, 0.10, -0.20), 9.0, 0.28, (0.95, 0.15, 0.10)),
        GaussianBlob((0.40, -0.25, 0.15), 7.0, 0.33, (0.10, 0.80, 0.20)),
        GaussianBlob((0.05, 0.40, 0.35), 8.0, 0.30, (0.15, 0.25, 0.95)),
    )
    scene = Scene(root, GaussianBlobs(blobs), vec3(1.0, 1.0, 1.0))
    camera = Camera((0.0, 0.15, 2.75), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 40.0, 64, 64)
    points = _mixture_points(blobs, root, 4096, seed=7)
    return SceneBundle("three_blobs", scene, camera, dt=0.05, depth=2, points=points)


def two_walls() -> SceneBundle:
    """One red wall, plus a second 'hallucinated' wall as a witness field.

    The true scene holds a single absorbing red wall near x = 1. The witness
    fields are two reconstructions that each render the same pixel color on
    their own: the wall where it really is, and the same wall displaced to
    x = 3. Blending them in 3D halves the densities and mixes in the black
    empty-space color, so the blended render is visibly darker than either.
    """
    root = Aabb([0, 0, 0], [4, 1, 1])
    wall_near = ConstantBox(Aabb([0.9, 0.0, 0.0], [1.1, 1.0, 1.0]), 30.0, (0.9, 0.1, 0.1))
    wall_far = ConstantBox(Aabb([2.9, 0.0, 0.0], [3.1, 1.0, 1.0]), 30.0, (0.9, 0.1, 0.1))
    scene = Scene(root, wall_near, vec3(0.0, 0.0, 0.0))
    camera = Camera((-1.4, 0.5, 0.5), (1.0, 0.5, 0.5), (0.0, 1.0, 0.0), 50.0, 48, 48)
    points = np.array(
        [[0.9, 0.5, 0.5], [1.1, 0.5, 0.5], [2.9, 0.5, 0.5], [3.1, 0.5, 0.5]]
    )
    return SceneBundle(
        "two_walls",
        scene,
        camera,
        dt=0.05,
        depth=1,
        points=points,
        witness_fields=(wall_near, wall_far),
    )


def street() -> SceneBundle:
    """Elongated scene with content strung along x, plus a seeded ray set."""
    root = Aabb([0, 0, 0], [8, 1, 2])
    blobs = (
        GaussianBlob((0.7, 0.50, 0.6), 8.0, 0.30, (0.9, 0.3, 0.2)),
        GaussianBlob((2.2, 0.40, 1.3), 7.0, 0.35, (0.2, 0.7, 0.3)),
        GaussianBlob((3.9, 0.60, 0.7), 9.0, 0.28, (0.3, 0.4, 0.9)),
        GaussianBlob((5.6, 0.35, 1.2), 6.0, 0.40, (0.8, 0.7, 0.2)),
        GaussianBlob((7.2, 0.50, 0.9), 8.0, 0.30, (0.7, 0.3, 0.8)),
    )
    scene = Scene(root, GaussianBlobs(blobs), vec3(0.05, 0.05, 0.08))
    camera = Camera((4.0, 0.6, -2.2), (4.0, 0.5, 1.0), (0.0, 1.0, 0.0), 55.0, 64, 32)
    rng = np.random.default_rng(11)
    rays = []
    for _ in range(240):
        origin = vec3(rng.uniform(0.5, 7.5), rng.uniform(0.3, 0.7), -1.2)
        target = vec3(
            origin[0] + rng.uniform(-1.0, 1.0), rng.uniform(0.2, 0.8), rng.uniform(0.4, 1.6)
        )
        rays.append(Ray(origin, unit(target - origin), 0.0, 30.0))
    return SceneBundle("street", scene, camera, dt=0.08, depth=2, rays=tuple(rays))


def voxel_room() -> SceneBundle:
    """Random voxel grid over a 2:1:1 room; the gradient-check scene."""
    root = Aabb([0, 0, 0], [2, 1, 1])
    rng = np.random.default_rng(5)
    res = (12, 6, 6)
    densities = rng.uniform(0.1, 2.5, size=res)
    colors = rng.uniform(0.0, 1.0, size=res + (3,))
    scene = Scene(root, VoxelGrid(root, densities, colors, "trilinear"), vec3(0.0, 0.0, 0.0))
    camera = Camera((-0.8, 0.5, 0.5), (1.0, 0.5, 0.5), (0.0, 1.0, 0.0), 45.0, 32, 32)
    points = np.random.default_rng(6).uniform(low=root.mn, high=root.mx, size=(512, 3))
    ray_rng = np.random.default_rng(12)
    rays = []
    for _ in range(24):
        origin = vec3(-0.6, ray_rng.uniform(0.2, 0.8), ray_rng.uniform(0.2, 0.8))
        target = vec3(2.5, ray_rng.uniform(0.15, 0.85), ray_rng.uniform(0.15, 0.85))
        rays.append(Ray(origin, unit(target - origin), 0.0, 10.0))
    return SceneBundle("voxel_room", scene, camera, dt=0.05, depth=2, points=points, rays=tuple(rays))


BUILTIN_SCENES = {
    "three_blobs": three_blobs,
    "two_walls": two_walls,
    "street": street,
    "voxel_room": voxel_room,
}


def load_builtin(name: str) -> SceneBundle:
    try:
        return BUILTIN_SCENES[name]()
    except KeyError:
        raise ValueError(f"unknown builtin scene {name!r}; have {sorted(BUILTIN_SCENES)}")
