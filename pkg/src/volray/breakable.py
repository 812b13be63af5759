"""Generic contract for ray integrals that decompose over segments.

A "breakable" quantity can be computed by evaluating each contiguous segment
of a ray independently and then combining the per-segment packets through a
small prefix state, starting from an identity. Transmittance, color,
accumulated weight, depth, and distortion all fit this shape, and the family
is closed under pointwise sums and products, which the combinators below
realize. The framework is data plus functions so that instances can be
corrupted in mutation tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segrender import aggregate_segment


def _aggregate_packet(samples):
    """Default segment evaluation: the (T, C, A, D, L) packet over filled bins."""
    return aggregate_segment(None, None, list(samples))


@dataclass(frozen=True)
class BreakableSpec:
    """One breakable quantity.

    ``identity`` is the initial prefix state, ``seg_eval`` maps a segment's
    bins to a packet, ``combine`` folds a packet into the state, and
    ``extract`` reads the quantity's value out of the final state. Combining
    the identity with the single whole-ray segment must reproduce the direct
    integral.
    """

    name: str
    identity: object
    seg_eval: object
    combine: object
    extract: object


def fold(spec: BreakableSpec, segments) -> object:
    """Combine ordered segments from the identity state and extract the value."""
    state = spec.identity
    for seg in segments:
        state = spec.combine(state, spec.seg_eval(seg))
    return spec.extract(state)


def split_runs(samples: list, cut_indices) -> list:
    """Partition a sample list into contiguous runs at the given indices."""
    n = len(samples)
    idx = sorted(set(int(i) for i in cut_indices))
    if any(i <= 0 or i >= n for i in idx):
        raise ValueError("cut indices must fall strictly inside the list")
    bounds = [0, *idx, n]
    return [samples[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def values_close(a, b, rel_tol: float) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return bool(np.max(np.abs(a - b), initial=0.0) <= rel_tol * (1.0 + np.max(np.abs(a), initial=0.0)))


def check_split_invariance(spec: BreakableSpec, samples: list, cut_indices, rel_tol: float = 1e-10) -> bool:
    """True iff folding over the cut segments matches folding the whole ray."""
    whole = fold(spec, [samples])
    parts = fold(spec, split_runs(samples, cut_indices))
    return values_close(whole, parts, rel_tol)


def transmittance_instance() -> BreakableSpec:
    # exp(-int sigma) over the whole ray is the product of the segment values.
    return BreakableSpec(
        name="transmittance",
        identity=1.0,
        seg_eval=_aggregate_packet,
        combine=lambda state, p: state * p.transmittance,
        extract=lambda state: state,
    )


def color_instance() -> BreakableSpec:
    def combine(state, p):
        t, c = state
        return (t * p.transmittance, c + t * p.color)

    return BreakableSpec("color", (1.0, np.zeros(3)), _aggregate_packet, combine, lambda s: s[1])


def weight_instance() -> BreakableSpec:
    def combine(state, p):
        t, a = state
        return (t * p.transmittance, a + t * p.alpha)

    return BreakableSpec("weight", (1.0, 0.0), _aggregate_packet, combine, lambda s: s[1])


def depth_instance() -> BreakableSpec:
    def combine(state, p):
        t, d = state
        return (t * p.transmittance, d + t * p.depth)

    return BreakableSpec("depth", (1.0, 0.0), _aggregate_packet, combine, lambda s: s[1])


def distortion_instance() -> BreakableSpec:
    # Prefix state (T, A, D) is the minimal sufficient statistic for the
    # cross term; L accumulates T^2 * L_seg + 2 * T * (D_seg * A - A_seg * D).
    def combine(state, p):
        t, a, d, loss = state
        loss = loss + t * t * p.distortion + 2.0 * t * (p.depth * a - p.alpha * d)
        return (t * p.transmittance, a + t * p.alpha, d + t * p.depth, loss)

    return BreakableSpec("distortion", (1.0, 0.0, 0.0, 0.0), _aggregate_packet, combine, lambda s: s[3])


def product_instance(a: BreakableSpec, b: BreakableSpec) -> BreakableSpec:
    """Pointwise product of two breakable quantities (closure combinator)."""
    return BreakableSpec(
        name=f"({a.name})*({b.name})",
        identity=(a.identity, b.identity),
        seg_eval=lambda seg: (a.seg_eval(seg), b.seg_eval(seg)),
        combine=lambda st, p: (a.combine(st[0], p[0]), b.combine(st[1], p[1])),
        extract=lambda st: np.asarray(a.extract(st[0])) * np.asarray(b.extract(st[1])),
    )


def sum_instance(a: BreakableSpec, b: BreakableSpec) -> BreakableSpec:
    """Pointwise sum of two breakable quantities (closure combinator)."""
    return BreakableSpec(
        name=f"({a.name})+({b.name})",
        identity=(a.identity, b.identity),
        seg_eval=lambda seg: (a.seg_eval(seg), b.seg_eval(seg)),
        combine=lambda st, p: (a.combine(st[0], p[0]), b.combine(st[1], p[1])),
        extract=lambda st: np.asarray(a.extract(st[0])) + np.asarray(b.extract(st[1])),
    )


def shipped_instances() -> list:
    """The five core quantities plus the two combinator-built ones."""
    t = transmittance_instance()
    w = weight_instance()
    return [
        t,
        color_instance(),
        w,
        depth_instance(),
        distortion_instance(),
        product_instance(transmittance_instance(), transmittance_instance()),
        sum_instance(weight_instance(), weight_instance()),
    ]
