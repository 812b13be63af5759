"""Balanced, disjoint axis-aligned tiles from a point cloud or from rays.

Splits recursively at the per-axis median of the point coordinates (the
empirical CDF = 0.5 plane) and picks the axis whose two children are closest
to cubic. Tiles use half-open boxes on split axes, so every point of the
root box belongs to exactly one tile.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Aabb, Ray, ray_box_intersect, vec3
from .quadrature import generate_samples, split_at_planes

AXES = "xyz"


class DegenerateSplitError(ValueError):
    """All candidate planes fail to separate the points inside the box."""


class InsufficientPointsError(ValueError):
    """Too few points to build the requested number of tiles."""


class NoPointsError(ValueError):
    """Ray discretization produced no points inside the root box."""


class OutOfBoundsError(ValueError):
    """Point lies outside the partition's root box."""


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3)
    source: str  # "sfm" | "ray_discretized"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class LeafNode:
    tile_id: int
    box: Aabb


@dataclass(frozen=True)
class SplitNode:
    axis: int
    plane: float
    low: object
    high: object


@dataclass(frozen=True)
class PartitionTree:
    """Binary tree of axis-aligned splits with 2^n disjoint leaf tiles.

    Leaves are half-open on split axes ([min, plane) below, [plane, max]
    above), cover the root box exactly, and are numbered depth-first.
    """

    root_box: Aabb
    root: object
    depth: int
    leaves: tuple

    def __post_init__(self):
        if len(self.leaves) != 2 ** self.depth:
            raise ValueError("leaf count does not match depth")


def _aspect_score(size: np.ndarray) -> float:
    """Sum of |log(edge / geometric-mean-edge)|; zero for a perfect cube."""
    g = float(np.cbrt(float(np.prod(size))))
    return float(np.abs(np.log(size / g)).sum())


def _median_plane(coords: np.ndarray) -> float:
    c = np.sort(coords)
    n = c.size
    if n % 2 == 1:
        return float(c[(n - 1) // 2])
    return 0.5 * (float(c[n // 2 - 1]) + float(c[n // 2]))


def choose_split(points: np.ndarray, box: Aabb):
    """Pick (axis, plane) at the coordinate median, preferring cubic children.

    For each axis the candidate plane is the median of the point coordinates
    (even count: midpoint of the two middle values; points equal to the
    plane count to the lower side). Axes whose plane fails to separate the
    points, or falls on a box face, are skipped. Among valid axes the one
    minimizing the summed aspect score of the two children wins; ties break
    in x, y, z order.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 2:
        raise InsufficientPointsError("need at least 2 points to split")
    best = None
    for axis in range(3):
        coords = pts[:, axis]
        plane = _median_plane(coords)
        n_low = int(np.count_nonzero(coords <= plane))
        if n_low == 0 or n_low == pts.shape[0]:
            continue
        if not (box.mn[axis] < plane < box.mx[axis]):
            continue
        lo_size = box.size.copy()
        lo_size[axis] = plane - box.mn[axis]
        hi_size = box.size.copy()
        hi_size[axis] = box.mx[axis] - plane
        score = _aspect_score(lo_size) + _aspect_score(hi_size)
        if best is None or score < best[0]:
            best = (score, axis, plane)
    if best is None:
        raise DegenerateSplitError("no axis separates the points inside the box")
    return best[1], best[2]


def build_tree(points, root_box: Aabb, depth: int) -> PartitionTree:
    """Recursive median splits down to 2^depth leaves.

    Sibling point counts differ by at most one at every level (for tie-free
    data). Raises InsufficientPointsError when fewer than 2^depth points are
    given and propagates DegenerateSplitError from unsplittable nodes.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if pts.shape[0] < 2 ** depth:
        raise InsufficientPointsError(f"{pts.shape[0]} points cannot fill {2 ** depth} tiles")
    leaves = []

    def rec(p, box, d):
        if d == 0:
            leaf = LeafNode(len(leaves), box)
            leaves.append(leaf)
            return leaf
        if p.shape[0] < 2:
            raise InsufficientPointsError("a subtree ran out of points to split")
        axis, plane = choose_split(p, box)
        low_sel = p[:, axis] <= plane
        lo_mx = box.mx.copy()
        lo_mx[axis] = plane
        hi_mn = box.mn.copy()
        hi_mn[axis] = plane
        low = rec(p[low_sel], Aabb(box.mn, lo_mx), d - 1)
        high = rec(p[~low_sel], Aabb(hi_mn, box.mx), d - 1)
        return SplitNode(axis, plane, low, high)

    root = rec(pts, root_box, depth)
    return PartitionTree(root_box, root, depth, tuple(leaves))


def locate(tree: PartitionTree, p) -> int:
    """Tile id owning point p; split planes belong to the high child."""
    p = vec3(p)
    if not tree.root_box.contains(p):
        raise OutOfBoundsError(f"{p} outside root box")
    node = tree.root
    while isinstance(node, SplitNode):
        node = node.low if p[node.axis] < node.plane else node.high
    return node.tile_id


def locate_many(tree: PartitionTree, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if not np.all(tree.root_box.contains_many(pts)):
        raise OutOfBoundsError("some points lie outside the root box")
    out = np.empty(pts.shape[0], dtype=np.int64)

    def rec(node, idx):
        if isinstance(node, LeafNode):
            out[idx] = node.tile_id
            return
        low = pts[idx, node.axis] < node.plane
        rec(node.low, idx[low])
        rec(node.high, idx[~low])

    rec(tree.root, np.arange(pts.shape[0]))
    return out


def tile_cut_distances(tree: PartitionTree, ray: Ray) -> list:
    """Distances at which the ray crosses interior tile boundaries, sorted."""
    root_hit = ray_box_intersect(ray, tree.root_box)
    if root_hit is None:
        return []
    te, tx = root_hit
    ts = set()
    for leaf in tree.leaves:
        hit = ray_box_intersect(ray, leaf.box)
        if hit is not None:
            ts.update(hit)
    return sorted(t for t in ts if te < t < tx)


def rays_to_points(rays, root: Aabb, dt: float, max_points: int, seed: int) -> PointCloud:
    """Discretize rays on the global dt grid and subsample the midpoints.

    Fallback for captures without a sparse point cloud. Deterministic for a
    fixed seed; raises NoPointsError when no ray intersects the root box.
    """
    if max_points <= 0:
        raise ValueError("max_points must be > 0")
    pts = []
    for ray in rays:
        samples = generate_samples(ray, root, dt)
        if samples:
            pts.append(ray.points_at(np.array([s.m for s in samples])))
    if not pts:
        raise NoPointsError("no ray intersects the root box")
    arr = np.concatenate(pts, axis=0)
    if arr.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(arr.shape[0], size=max_points, replace=False))
        arr = arr[keep]
    return PointCloud(arr, "ray_discretized")


def default_root_box(points: np.ndarray) -> Aabb:
    """Point-cloud bounding box inflated by 1% per axis about its center."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    mn = pts.min(axis=0)
    mx = pts.max(axis=0)
    extent = mx - mn
    pad = np.where(extent > 0.0, 0.005 * extent, 1e-3)
    return Aabb(mn - pad, mx + pad)


def balance_report(tree: PartitionTree, points, rays=None, dt: float = None) -> dict:
    """Per-leaf point counts, and per-leaf render-time sample counts if rays
    are given. Ratios are max/min, or None when some leaf is empty."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    inside = tree.root_box.contains_many(pts)
    tids = locate_many(tree, pts[inside])
    counts = np.bincount(tids, minlength=len(tree.leaves))
    report = {
        "num_tiles": len(tree.leaves),
        "leaf_point_counts": [int(c) for c in counts],
        "points_outside_root": int(np.count_nonzero(~inside)),
        "point_max_min_ratio": float(counts.max() / counts.min()) if counts.min() > 0 else None,
    }
    if rays is not None:
        if dt is None or dt <= 0.0:
            raise ValueError("sample counting needs dt > 0")
        sample_counts = np.zeros(len(tree.leaves), dtype=np.int64)
        for ray in rays:
            samples = generate_samples(ray, tree.root_box, dt)
            samples = split_at_planes(samples, tile_cut_distances(tree, ray))
            if samples:
                mids = np.array([s.m for s in samples])
                sample_counts += np.bincount(
                    locate_many(tree, ray.points_at(mids)), minlength=len(tree.leaves)
                )
        report["leaf_sample_counts"] = [int(c) for c in sample_counts]
        report["sample_max_min_ratio"] = (
            float(sample_counts.max() / sample_counts.min()) if sample_counts.min() > 0 else None
        )
    return report


def _node_to_json(node) -> dict:
    if isinstance(node, LeafNode):
        return {"tile_id": node.tile_id, "box": node.box.to_json()}
    return {
        "axis": AXES[node.axis],
        "plane": float(node.plane),
        "low": _node_to_json(node.low),
        "high": _node_to_json(node.high),
    }


def _node_from_json(d: dict, box: Aabb, leaves: list):
    if "tile_id" in d:
        leaf = LeafNode(int(d["tile_id"]), Aabb.from_json(d["box"]))
        if leaf.tile_id != len(leaves):
            raise ValueError("leaf tile_ids must be depth-first sequential")
        leaves.append(leaf)
        return leaf
    axis = AXES.index(d["axis"])
    plane = float(d["plane"])
    lo_mx = box.mx.copy()
    lo_mx[axis] = plane
    hi_mn = box.mn.copy()
    hi_mn[axis] = plane
    low = _node_from_json(d["low"], Aabb(box.mn, lo_mx), leaves)
    high = _node_from_json(d["high"], Aabb(hi_mn, box.mx), leaves)
    return SplitNode(axis, plane, low, high)


def tree_to_json(tree: PartitionTree) -> dict:
    # Field order is fixed so that write -> read -> write is byte-stable.
    return {
        "root_box": tree.root_box.to_json(),
        "depth": tree.depth,
        "root": _node_to_json(tree.root),
    }


def tree_from_json(d: dict) -> PartitionTree:
    root_box = Aabb.from_json(d["root_box"])
    leaves = []
    root = _node_from_json(d["root"], root_box, leaves)
    return PartitionTree(root_box, root, int(d["depth"]), tuple(leaves))


def save_tree(tree: PartitionTree, path) -> None:
    Path(path).write_text(json.dumps(tree_to_json(tree), indent=2) + "\n")


def load_tree(path) -> PartitionTree:
    return tree_from_json(json.loads(Path(path).read_text()))


def load_points(path) -> PointCloud:
    """Read an ASCII PLY (element vertex with float x, y, z) or plain
    whitespace-separated "x y z" lines. Lines starting with '#' are skipped
    in the plain format."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if lines and lines[0].strip() == "ply":
        return _parse_ply(lines)
    pts = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ValueError(f"expected 'x y z' per line, got {line!r}")
        pts.append([float(parts[0]), float(parts[1]), float(parts[2])])
    if not pts:
        raise ValueError("no points in file")
    return PointCloud(np.array(pts), "sfm")


def _parse_ply(lines) -> PointCloud:
    n_vertex = None
    props = []
    in_vertex_element = False
    body_at = None
    for i, raw in enumerate(lines[1:], start=1):
        parts = raw.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise ValueError("only ascii PLY is supported")
        elif parts[0] == "element":
            in_vertex_element = parts[1] == "vertex"
            if in_vertex_element:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex_element:
            props.append(parts[2])
        elif parts[0] == "end_header":
            body_at = i + 1
            break
    if n_vertex is None or body_at is None:
        raise ValueError("malformed PLY header")
    try:
        cols = [props.index(a) for a in AXES]
    except ValueError:
        raise ValueError("PLY vertex element must carry x, y, z properties")
    pts = np.empty((n_vertex, 3))
    row = 0
    for raw in lines[body_at:]:
        if row == n_vertex:
            break
        parts = raw.split()
        if not parts:
            continue
        pts[row] = [float(parts[c]) for c in cols]
        row += 1
    if row != n_vertex:
        raise ValueError(f"PLY body ended after {row} of {n_vertex} vertices")
    return PointCloud(pts, "sfm")


def save_points_xyz(points: np.ndarray, path) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w") as f:
        for p in pts:
            f.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n")
