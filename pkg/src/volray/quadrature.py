"""Deterministic ray sampling and the monolithic single-worker renderer.

This is the ground-truth oracle for every distributed path: a fixed global
grid of quadrature bins (no jitter), midpoint density evaluation with
alpha = 1 - exp(-sigma * delta), and an O(N^2) pairwise distortion term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import Field
from .geometry import Aabb, Ray, ray_box_intersect  # noqa: F401  (re-exported)

# Bins thinner than this are dropped when cuts land on or near an edge.
SLIVER = 1e-12


@dataclass(slots=True)
class SampleInterval:
    """One quadrature bin on a ray: [t0, t1) with midpoint evaluation.

    ``sigma``/``rgb`` start unevaluated (zero/black) and are filled against a
    field by ``fill_samples``. ``tile_id`` is assigned by the partition owner
    lookup, or stays None for monolithic rendering.
    """

    t0: float
    t1: float
    m: float = None  # type: ignore[assignment]
    sigma: float = 0.0
    rgb: np.ndarray = None  # type: ignore[assignment]
    tile_id: int = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.m is None:
            self.m = 0.5 * (self.t0 + self.t1)
        if self.rgb is None:
            self.rgb = np.zeros(3)

    @property
    def delta(self) -> float:
        return self.t1 - self.t0


@dataclass
class RayAggregate:
    """Composed per-ray result: color C, opacity A, depth D, transmittance T,
    and distortion L. A + T = 1 up to round-off; the background is composited
    by the caller as C + T * background."""

    color: np.ndarray
    alpha: float
    depth: float
    transmittance: float
    distortion: float


def empty_aggregate() -> RayAggregate:
    return RayAggregate(np.zeros(3), 0.0, 0.0, 1.0, 0.0)


def generate_samples(ray: Ray, root: Aabb, dt: float) -> list:
    """Clip the ray to the root box and lay bins of width dt from the entry t.

    The grid is anchored at the clipped entry distance and the final bin is
    truncated at the exit; sliver tails below 1e-12 m are dropped. Returns an
    empty list when the ray misses the box.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    hit = ray_box_intersect(ray, root)
    if hit is None:
        return []
    te, tx = hit
    span = tx - te
    if span <= SLIVER:
        return []
    n = int(math.floor(span / dt))
    edges = [te + k * dt for k in range(n + 1)]
    if tx - edges[-1] > SLIVER:
        edges.append(tx)
    else:
        edges[-1] = tx
    return [SampleInterval(a, b) for a, b in zip(edges[:-1], edges[1:]) if b - a > SLIVER]


def split_at_planes(samples: list, cut_ts) -> list:
    """Split every bin straddling a cut t into sub-bins at that t.

    ``cut_ts`` must be sorted strictly increasing. Sub-bins get fresh
    midpoints and unevaluated sigma/rgb; bins not touched by any cut pass
    through unchanged. Sub-bins thinner than 1e-12 m are dropped.
    """
    cuts = np.asarray(cut_ts, dtype=np.float64)
    if cuts.size == 0:
        return list(samples)
    if np.any(np.diff(cuts) <= 0.0):
        raise ValueError("cut_ts must be sorted strictly increasing")
    out = []
    for s in samples:
        inner = cuts[(cuts > s.t0) & (cuts < s.t1)]
        if inner.size == 0:
            if s.delta > SLIVER:
                out.append(s)
            continue
        edges = [s.t0, *inner.tolist(), s.t1]
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a > SLIVER:
                out.append(SampleInterval(a, b))
    return out


def fill_samples(field: Field, ray: Ray, samples: list) -> list:
    """Evaluate sigma and rgb at each bin midpoint, in place."""
    if not samples:
        return samples
    ts = np.array([s.m for s in samples])
    pts = ray.points_at(ts)
    sig = field.sigma_many(pts)
    rgb = field.rgb_many(pts, ray.dir)
    for i, s in enumerate(samples):
        s.sigma = float(sig[i])
        s.rgb = rgb[i]
    return samples


def _bin_arrays(samples: list):
    n = len(samples)
    t0 = np.fromiter((s.t0 for s in samples), dtype=np.float64, count=n)
    t1 = np.fromiter((s.t1 for s in samples), dtype=np.float64, count=n)
    m = np.fromiter((s.m for s in samples), dtype=np.float64, count=n)
    sigma = np.fromiter((s.sigma for s in samples), dtype=np.float64, count=n)
    rgb = np.array([s.rgb for s in samples]) if n else np.zeros((0, 3))
    return t0, t1, m, sigma, rgb


def composite_samples(samples: list) -> RayAggregate:
    """Front-to-back compositing over already-evaluated bins.

    Per bin i: alpha_i = 1 - exp(-sigma_i * delta_i), the prefix
    transmittance T_i is the product of (1 - alpha_j) for j < i, and the
    weight w_i = T_i * alpha_i. Returns C = sum w_i c_i, A = sum w_i,
    D = sum w_i m_i, T = prod(1 - alpha_i), and the pairwise distortion
    over (w, m).
    """
    if not samples:
        return empty_aggregate()
    t0, t1, m, sigma, rgb = _bin_arrays(samples)
    alpha = 1.0 - np.exp(-sigma * (t1 - t0))
    keep = np.concatenate(([1.0], 1.0 - alpha))
    t_excl = np.cumprod(keep)
    t_prefix, t_final = t_excl[:-1], float(t_excl[-1])
    w = t_prefix * alpha
    color = (w[:, None] * rgb).sum(axis=0)
    return RayAggregate(
        color=color,
        alpha=float(w.sum()),
        depth=float((w * m).sum()),
        transmittance=t_final,
        distortion=distortion_bruteforce(w, m),
    )


def integrate_ray(field, ray: Ray, samples: list) -> RayAggregate:
    """Evaluate the field over the bins (if given) and composite.

    Passing ``field=None`` composites bins that already carry sigma/rgb,
    which is the arithmetic a compositor runs on gathered sample payloads.
    """
    if field is not None:
        fill_samples(field, ray, samples)
    return composite_samples(samples)


def distortion_bruteforce(weights, midpoints) -> float:
    """Sum over all ordered pairs of w_i * w_j * |m_i - m_j| (O(N^2) oracle)."""
    w = np.asarray(weights, dtype=np.float64)
    m = np.asarray(midpoints, dtype=np.float64)
    if w.shape != m.shape:
        raise ValueError("weights and midpoints must have equal length")
    if w.size == 0:
        return 0.0
    gaps = np.abs(m[:, None] - m[None, :])
    return float(w @ gaps @ w)


def contiguous_runs(samples: list) -> list:
    """Group sorted bins into maximal runs sharing exact endpoints.

    Adjacent bins produced by one grid/split pass share bit-identical edge
    values, so exact equality is the right adjacency test.
    """
    runs = []
    cur = []
    for s in samples:
        if cur and s.t0 != cur[-1].t1:
            runs.append(cur)
            cur = []
        cur.append(s)
    if cur:
        runs.append(cur)
    return runs
