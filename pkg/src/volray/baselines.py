"""Independently-trained-field blending baselines over overlapping tiles.

These reproduce the failure modes of stitching per-region reconstructions:
2D blending averages whole images by camera-to-tile distance, 3D blending
averages density and color per sample across every overlapping tile. Both
deviate from the monolithic render whenever the per-tile fields disagree in
the overlap, while the disjoint-tile pipeline stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import overlap_mask
from .geometry import Aabb, Ray, ray_box_intersect
from .quadrature import composite_samples, generate_samples, split_at_planes


class WeightMismatchError(ValueError):
    """Blend weights must sum to 1."""


@dataclass(frozen=True)
class OverlappedTiles:
    """Partition leaves grown by a fraction f of each edge on every side."""

    boxes: tuple
    f: float

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))


def expand_tiles(tree, f: float) -> OverlappedTiles:
    """Grow each leaf box by f * edge_length per axis per side, clamped to root."""
    if f < 0.0:
        raise ValueError("overlap fraction must be >= 0")
    root = tree.root_box
    boxes = []
    for leaf in tree.leaves:
        grow = f * leaf.box.size
        boxes.append(Aabb(np.maximum(leaf.box.mn - grow, root.mn), np.minimum(leaf.box.mx + grow, root.mx)))
    return OverlappedTiles(tuple(boxes), f)


def tile_fields(scene_field, tiles: OverlappedTiles) -> list:
    """Mask the scene into each overlapped box: the stand-in for a per-tile
    field trained on exactly that region."""
    return [overlap_mask(scene_field, box) for box in tiles.boxes]


def _boundary_distance(box: Aabb, pts: np.ndarray) -> np.ndarray:
    """Distance from interior points to the nearest box face (0 on faces)."""
    return np.minimum((pts - box.mn).min(axis=1), (box.mx - pts).min(axis=1))


def _blend_weights(tiles: OverlappedTiles, pts: np.ndarray):
    """Per-tile weights at each point: boundary distance, normalized over the
    containing tiles; uniform when every containing tile has distance 0."""
    n = pts.shape[0]
    contained = np.zeros((len(tiles.boxes), n), dtype=bool)
    dist = np.zeros((len(tiles.boxes), n))
    for k, box in enumerate(tiles.boxes):
        inside = box.contains_many(pts)
        contained[k] = inside
        if np.any(inside):
            dist[k, inside] = _boundary_distance(box, pts[inside])
    weights = np.where(contained, dist, 0.0)
    total = weights.sum(axis=0)
    n_contained = contained.sum(axis=0)
    degenerate = (total == 0.0) & (n_contained > 0)
    if np.any(degenerate):
        weights[:, degenerate] = contained[:, degenerate] / n_contained[degenerate]
        total = weights.sum(axis=0)
    safe = np.where(total > 0.0, total, 1.0)
    return contained, weights / safe


def render_blend3d(fields_per_tile, tiles: OverlappedTiles, ray: Ray, root: Aabb, dt: float):
    """Quadrature over per-sample blended density and color.

    Each bin midpoint takes the boundary-distance-weighted average of sigma
    and rgb across every tile containing it. With zero overlap each point has
    one owner and this reduces to the monolithic render.
    """
    if len(fields_per_tile) != len(tiles.boxes):
        raise ValueError("need exactly one field per tile")
    samples = generate_samples(ray, root, dt)
    cuts = set()
    root_hit = ray_box_intersect(ray, root)
    if root_hit is not None:
        te, tx = root_hit
        for box in tiles.boxes:
            hit = ray_box_intersect(ray, box)
            if hit is not None:
                cuts.update(t for t in hit if te < t < tx)
    samples = split_at_planes(samples, sorted(cuts))
    if not samples:
        return composite_samples(samples)
    pts = ray.points_at(np.array([s.m for s in samples]))
    _, weights = _blend_weights(tiles, pts)
    sigma = np.zeros(len(samples))
    rgb = np.zeros((len(samples), 3))
    for k, f in enumerate(fields_per_tile):
        active = weights[k] > 0.0
        if not np.any(active):
            continue
        sigma[active] += weights[k, active] * f.sigma_many(pts[active])
        rgb[active] += weights[k, active, None] * f.rgb_many(pts[active], ray.dir)
    for i, s in enumerate(samples):
        s.sigma = float(sigma[i])
        s.rgb = rgb[i]
    return composite_samples(samples)


def camera_tile_weights(camera_position, tiles: OverlappedTiles) -> np.ndarray:
    """Inverse distance from the camera to each tile center, normalized."""
    pos = np.asarray(camera_position, dtype=np.float64)
    d = np.array([float(np.linalg.norm(pos - box.center)) for box in tiles.boxes])
    if np.any(d == 0.0):
        w = (d == 0.0).astype(np.float64)
        return w / w.sum()
    inv = 1.0 / d
    return inv / inv.sum()


def render_blend2d(images_per_tile, tile_weights) -> np.ndarray:
    """Pixelwise weighted average of per-tile renders."""
    w = np.asarray(tile_weights, dtype=np.float64)
    if len(images_per_tile) != w.size:
        raise WeightMismatchError("one weight per image required")
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise WeightMismatchError(f"weights sum to {w.sum()}, expected 1")
    out = np.zeros_like(np.asarray(images_per_tile[0], dtype=np.float64))
    for wi, img in zip(w, images_per_tile):
        out += wi * np.asarray(img, dtype=np.float64)
    return out


def redundancy_fraction(tree, tiles: OverlappedTiles, rays, dt: float) -> float:
    """Fraction of per-tile ray samples that fall outside the tile's own leaf.

    Counts, over all (ray, tile) pairs, the samples inside the expanded box;
    the returned fraction is how many of those lie outside the unexpanded
    leaf, i.e. capacity a per-tile field spends on surroundings.
    """
    in_expanded = 0
    out_of_leaf = 0
    for ray in rays:
        samples = generate_samples(ray, tree.root_box, dt)
        if not samples:
            continue
        pts = ray.points_at(np.array([s.m for s in samples]))
        for leaf, box in zip(tree.leaves, tiles.boxes):
            inside = box.contains_many(pts)
            n_in = int(np.count_nonzero(inside))
            if n_in == 0:
                continue
            in_leaf = leaf.box.contains_many(pts[inside])
            in_expanded += n_in
            out_of_leaf += n_in - int(np.count_nonzero(in_leaf))
    return out_of_leaf / in_expanded if in_expanded else 0.0
