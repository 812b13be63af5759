"""Per-segment aggregation and cross-segment composition.

A ray cut into contiguous segments can be rendered by aggregating each
segment independently (with local transmittance starting at 1) and then
alpha-compositing the per-segment packets in geometric order. The composed
color, opacity, depth, transmittance, and distortion are identical to the
monolithic single-pass results, which is what lets disjoint tile workers
render jointly while exchanging only one small packet per ray.

The distortion loss composes through the cross term

    S_k = D_k * A_prefix - A_k * D_prefix

which captures all weight-pair interactions between segment k and everything
in front of it, so the pairwise loss never needs the raw samples of other
segments.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from . import partitioner
from .field import Scene, VoxelGrid, tile_mask
from .quadrature import (
    RayAggregate,
    composite_samples,
    contiguous_runs,
    fill_samples,
    generate_samples,
    split_at_planes,
)


class NonFiniteInputError(ValueError):
    """A segment aggregate carries NaN or infinity."""


class NegativeLossError(ValueError):
    """Composed distortion went negative beyond round-off: a composition bug."""


class ParamNotOwnedError(KeyError):
    """The referenced parameter does not belong to the given worker's tile."""


@dataclass
class SegmentAggregate:
    """Per-tile per-ray packet (T, C, A, D, L) plus the segment entry distance.

    This is the only data that crosses workers in the efficient protocol.
    """

    transmittance: float
    color: np.ndarray
    alpha: float
    depth: float
    distortion: float
    order_t: float


def identity_aggregate(order_t: float = math.inf) -> SegmentAggregate:
    """The neutral segment: fully transparent, contributes nothing."""
    return SegmentAggregate(1.0, np.zeros(3), 0.0, 0.0, 0.0, order_t)


def aggregate_segment(field, ray, samples: list) -> SegmentAggregate:
    """Render one contiguous run of bins locally, starting from T = 1.

    ``field=None`` aggregates bins that already carry sigma/rgb. The local
    distortion uses the segment's own weights and midpoints; order_t is the
    t0 of the first bin.
    """
    if not samples:
        return identity_aggregate()
    if field is not None:
        fill_samples(field, ray, samples)
    agg = composite_samples(samples)
    return SegmentAggregate(
        transmittance=agg.transmittance,
        color=agg.color,
        alpha=agg.alpha,
        depth=agg.depth,
        distortion=agg.distortion,
        order_t=samples[0].t0,
    )


def compose_render(segments: list) -> RayAggregate:
    """Alpha-composite ordered segment packets into a ray aggregate.

    Segments must be sorted by entry distance; each contributes its color,
    opacity, and depth scaled by the prefix transmittance, which then picks
    up the segment's own transmittance. Distortion is left at zero; use
    ``compose_distortion``.
    """
    t_prefix = 1.0
    color = np.zeros(3)
    alpha = 0.0
    depth = 0.0
    for s in segments:
        color = color + t_prefix * s.color
        alpha += t_prefix * s.alpha
        depth += t_prefix * s.depth
        t_prefix *= s.transmittance
    return RayAggregate(color, alpha, depth, t_prefix, 0.0)


def compose_distortion(segments: list) -> float:
    """Compose per-segment distortion into the global pairwise loss.

    Walks the ordered segments keeping the prefix state (T, A, D). Segment k
    adds T^2 * L_k for its internal pairs plus 2 * T * S_k for pairs that
    straddle the boundary, with S_k = D_k * A_prefix - A_k * D_prefix. The
    first segment has an empty prefix, so its cross term is zero.

    Raises NonFiniteInputError on NaN/inf packets and NegativeLossError if
    the result is below -1e-12; tinier negatives are clamped to zero.
    """
    for s in segments:
        vals = (s.transmittance, s.alpha, s.depth, s.distortion, *s.color)
        if not all(math.isfinite(v) for v in vals):
            raise NonFiniteInputError(f"non-finite segment aggregate: {s}")
    t_prefix = 1.0
    a_prefix = 0.0
    d_prefix = 0.0
    loss = 0.0
    for s in segments:
        cross = s.depth * a_prefix - s.alpha * d_prefix
        loss += t_prefix * t_prefix * s.distortion + 2.0 * t_prefix * cross
        a_prefix += t_prefix * s.alpha
        d_prefix += t_prefix * s.depth
        t_prefix *= s.transmittance
    if loss < 0.0:
        if loss < -1e-12:
            raise NegativeLossError(f"composed distortion is {loss}")
        loss = 0.0
    return loss


@dataclass(frozen=True)
class ParamRef:
    """Addresses one scalar density parameter: a voxel index in a tile's grid."""

    tile_id: int
    index: tuple


class DistributedLossProbe:
    """Finite-difference harness for the gradient-locality contract.

    Each tile worker owns an independent copy of the scene's voxel grid,
    masked to its tile, mirroring per-tile parameter ownership. The probe
    caches every worker's segment geometry and unperturbed aggregates for a
    fixed ray set, then compares two central-difference gradients of the
    composed loss (color MSE against a constant target, plus distortion):

      GLOBAL - re-run every worker's aggregation for the perturbed parameter
               and recompose;
      LOCAL  - re-run only the owning worker, reusing the cached aggregates
               of all other workers as constants.
    """

    def __init__(self, scene: Scene, tree, rays, dt: float, target=0.5):
        if not isinstance(scene.field, VoxelGrid):
            raise TypeError("gradient probe requires a voxel-grid scene field")
        self.scene = scene
        self.tree = tree
        self.rays = list(rays)
        self.target = float(target)
        self.fields = [
            tile_mask(copy.deepcopy(scene.field), leaf.box, tree.root_box)
            for leaf in tree.leaves
        ]
        # Per ray and worker: cached bin geometry and the unperturbed packets.
        self._geometry = []  # list of dict tile_id -> list of runs (each a list of bins)
        self._base = []  # list of dict tile_id -> list of SegmentAggregate
        for ray in self.rays:
            samples = generate_samples(ray, tree.root_box, dt)
            cuts = partitioner.tile_cut_distances(tree, ray)
            samples = split_at_planes(samples, cuts)
            mids = np.array([s.m for s in samples]) if samples else np.zeros(0)
            tids = partitioner.locate_many(tree, ray.points_at(mids)) if samples else np.zeros(0, int)
            per_worker = {}
            for s, tid in zip(samples, tids):
                per_worker.setdefault(int(tid), []).append(s)
            runs = {tid: contiguous_runs(bins) for tid, bins in per_worker.items()}
            self._geometry.append(runs)
            self._base.append({tid: self._eval_worker(ray, tid, runs[tid]) for tid in runs})

    def _eval_worker(self, ray, tile_id, runs):
        return [aggregate_segment(self.fields[tile_id], ray, list(run)) for run in runs]

    def _loss(self, per_ray_segments) -> float:
        total = 0.0
        for segs in per_ray_segments:
            ordered = sorted(segs, key=lambda sk: (sk[0].order_t, sk[1]))
            ordered_segs = [s for s, _ in ordered]
            agg = compose_render(ordered_segs)
            pix = agg.color + agg.transmittance * self.scene.background
            err = pix - self.target
            total += float(err @ err) + compose_distortion(ordered_segs)
        return total

    def _collect(self, worker_k=None, ray=None):
        """Segment lists per ray; re-evaluates worker_k (or all if k is None)."""
        out = []
        for i, r in enumerate(self.rays):
            segs = []
            for tid, runs in self._geometry[i].items():
                if worker_k is None or tid == worker_k:
                    aggs = self._eval_worker(r, tid, runs)
                else:
                    aggs = self._base[i][tid]
                segs.extend((a, tid) for a in aggs)
            out.append(segs)
        return out

    def _check_owned(self, worker_k: int, param: ParamRef):
        grid = self.fields[worker_k].base
        idx = tuple(int(v) for v in param.index)
        if len(idx) != 3 or any(not 0 <= idx[a] < grid.resolution[a] for a in range(3)):
            raise ParamNotOwnedError(f"voxel index {idx} outside grid {grid.resolution}")
        owner = partitioner.locate(self.tree, grid.voxel_center(idx))
        if param.tile_id != worker_k or owner != worker_k:
            raise ParamNotOwnedError(
                f"voxel {idx} (tile {owner}) is not owned by worker {worker_k}"
            )
        return idx

    def gradient_pair(self, worker_k: int, param: ParamRef, h: float):
        """Returns (local, global) central-difference gradients."""
        if h <= 0.0:
            raise ValueError("h must be > 0")
        idx = self._check_owned(worker_k, param)
        dens = self.fields[worker_k].base.densities
        base_value = dens[idx]
        results = {}
        for mode in ("local", "global"):
            vals = []
            for sign in (+1.0, -1.0):
                dens[idx] = base_value + sign * h
                rerun = worker_k if mode == "local" else None
                vals.append(self._loss(self._collect(worker_k=rerun)))
                dens[idx] = base_value
            results[mode] = (vals[0] - vals[1]) / (2.0 * h)
        return results["local"], results["global"]


def local_gradient_fd(scene, tree, worker_k, param_ref, h, rays, dt, target=0.5):
    """One-shot (local, global) gradient pair; see DistributedLossProbe."""
    probe = DistributedLossProbe(scene, tree, rays, dt, target=target)
    return probe.gradient_pair(worker_k, param_ref, h)
