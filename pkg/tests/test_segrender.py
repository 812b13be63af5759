import math

import numpy as np
import pytest

from volray import partitioner, scenes
from volray.breakable import split_runs
from volray.quadrature import composite_samples, distortion_bruteforce
from volray.segrender import (
    DistributedLossProbe,
    NegativeLossError,
    NonFiniteInputError,
    ParamNotOwnedError,
    ParamRef,
    SegmentAggregate,
    aggregate_segment,
    compose_distortion,
    compose_render,
    identity_aggregate,
)
from volray.verify import random_cut_indices, random_filled_samples

from test_quadrature import bin_at


def seg(T=1.0, C=(0, 0, 0), A=0.0, D=0.0, L=0.0, order_t=0.0):
    return SegmentAggregate(T, np.asarray(C, dtype=float), A, D, L, order_t)


# --- aggregate_segment -------------------------------------------------------

def test_empty_segment_is_identity():
    agg = aggregate_segment(None, None, [])
    assert agg.transmittance == 1.0 and agg.alpha == 0.0 and agg.distortion == 0.0
    np.testing.assert_array_equal(agg.color, [0, 0, 0])


def test_single_bin_closed_form():
    # sigma * delta = ln 2 around midpoint 1.0
    agg = aggregate_segment(None, None, [bin_at(0.75, 1.25, sigma=math.log(2.0) / 0.5, rgb=(1, 0, 0))])
    assert agg.transmittance == pytest.approx(0.5, rel=1e-15)
    assert agg.alpha == pytest.approx(0.5, rel=1e-15)
    assert agg.depth == pytest.approx(0.5, rel=1e-15)
    assert agg.distortion == 0.0
    assert agg.order_t == 0.75


def test_whole_ray_segment_matches_monolithic():
    for i in range(20):
        _, _, samples = random_filled_samples(np.random.default_rng(100 + i))
        if not samples:
            continue
        whole = composite_samples(samples)
        agg = aggregate_segment(None, None, samples)
        np.testing.assert_array_equal(agg.color, whole.color)
        assert agg.transmittance == whole.transmittance
        assert agg.distortion == whole.distortion


# --- compose_render ----------------------------------------------------------

def test_compose_single_segment_unchanged():
    s = seg(T=0.3, C=(0.2, 0.1, 0.0), A=0.7, D=1.5, order_t=1.0)
    out = compose_render([s])
    np.testing.assert_array_equal(out.color, s.color)
    assert out.alpha == s.alpha and out.depth == s.depth and out.transmittance == s.transmittance


def test_compose_hand_case():
    out = compose_render([seg(T=0.5, C=(0.3, 0, 0)), seg(T=1.0, C=(0.2, 0, 0))])
    assert out.color[0] == pytest.approx(0.4, rel=1e-15)
    assert out.transmittance == pytest.approx(0.5, rel=1e-15)


def test_compose_full_occlusion():
    out = compose_render([seg(T=0.0, C=(1, 0, 0), A=1.0), seg(T=0.5, C=(0, 1, 0), A=0.5)])
    np.testing.assert_array_equal(out.color, [1, 0, 0])
    assert out.alpha == 1.0 and out.transmittance == 0.0


def test_compose_empty_is_identity():
    out = compose_render([])
    assert out.transmittance == 1.0 and out.alpha == 0.0


# --- compose_distortion ------------------------------------------------------

def test_distortion_cross_term_hand_case():
    # two point-mass segments: w = [.5, .5] at m = [1, 3] -> loss 1.0
    s1 = seg(T=0.5, A=0.5, D=0.5, L=0.0, order_t=0.0)
    s2 = seg(T=0.0, A=1.0, D=3.0, L=0.0, order_t=2.0)
    assert compose_distortion([s1, s2]) == pytest.approx(1.0, rel=1e-15)
    assert distortion_bruteforce([0.5, 0.5], [1.0, 3.0]) == pytest.approx(1.0, rel=1e-15)


def test_distortion_single_segment_passthrough():
    assert compose_distortion([seg(T=0.5, A=0.5, D=0.5, L=0.37)]) == 0.37


def test_distortion_single_occupied_segment_scales_by_prefix_sq():
    empty = identity_aggregate(order_t=0.0)
    busy = seg(T=0.5, A=0.5, D=1.0, L=0.2, order_t=1.0)
    # identity prefix keeps T = 1, so L = 1^2 * 0.2 and no cross terms
    assert compose_distortion([empty, busy, identity_aggregate(order_t=5.0)]) == pytest.approx(0.2)


def test_distortion_rejects_non_finite():
    with pytest.raises(NonFiniteInputError):
        compose_distortion([seg(T=math.nan)])


def test_distortion_negative_loss_detection():
    with pytest.raises(NegativeLossError):
        compose_distortion([seg(L=-1.0)])
    # round-off-scale negatives clamp to zero
    assert compose_distortion([seg(L=-1e-13)]) == 0.0


# --- equivalence and structure -------------------------------------------------

def test_partition_equivalence_random_cuts():
    for i in range(100):
        rng = np.random.default_rng(7000 + i)
        _, _, samples = random_filled_samples(rng)
        if not samples:
            continue
        cuts = random_cut_indices(rng, len(samples))
        whole = composite_samples(samples)
        segs = [aggregate_segment(None, None, run) for run in split_runs(samples, cuts)]
        got = compose_render(segs)
        tol = lambda v: 1e-10 * (1.0 + abs(v))
        assert np.all(np.abs(got.color - whole.color) <= 1e-10 * (1.0 + np.abs(whole.color)))
        assert abs(got.alpha - whole.alpha) <= tol(whole.alpha)
        assert abs(got.depth - whole.depth) <= tol(whole.depth)
        assert abs(got.transmittance - whole.transmittance) <= tol(whole.transmittance)
        loss = compose_distortion(segs)
        assert abs(loss - whole.distortion) <= 1e-9 * (1.0 + abs(whole.distortion))


def test_prefix_transmittance_is_segment_product():
    rng = np.random.default_rng(42)
    _, _, samples = random_filled_samples(rng)
    cuts = random_cut_indices(rng, len(samples))
    segs = [aggregate_segment(None, None, run) for run in split_runs(samples, cuts)]
    composed = compose_render(segs)
    prod = 1.0
    for s in segs:
        prod *= s.transmittance
    assert composed.transmittance == prod  # same fold, bit-exact
    total_optical_depth = sum(s.sigma * s.delta for s in samples)
    assert composed.transmittance == pytest.approx(math.exp(-total_optical_depth), abs=1e-9)


def test_composition_associativity():
    rng = np.random.default_rng(43)
    _, _, samples = random_filled_samples(rng)
    runs = split_runs(samples, random_cut_indices(rng, len(samples), max_segments=6))
    if len(runs) < 3:
        runs = split_runs(samples, [len(samples) // 3, 2 * len(samples) // 3])
    segs = [aggregate_segment(None, None, run) for run in runs]
    j = len(segs) // 2
    head = compose_render(segs[:j])
    head_seg = SegmentAggregate(
        head.transmittance, head.color, head.alpha, head.depth,
        compose_distortion(segs[:j]), segs[0].order_t,
    )
    two_stage = compose_render([head_seg] + segs[j:])
    one_pass = compose_render(segs)
    np.testing.assert_array_equal(two_stage.color, one_pass.color)
    assert two_stage.transmittance == one_pass.transmittance
    assert two_stage.alpha == one_pass.alpha and two_stage.depth == one_pass.depth
    assert compose_distortion([head_seg] + segs[j:]) == compose_distortion(segs)


# --- gradient locality -------------------------------------------------------

@pytest.fixture(scope="module")
def voxel_probe():
    bundle = scenes.voxel_room()
    tree = partitioner.build_tree(bundle.points, bundle.scene.root_box, bundle.depth)
    return bundle, tree, DistributedLossProbe(bundle.scene, tree, bundle.rays, bundle.dt)


def _touched_voxel(bundle, tree, rng):
    grid = bundle.scene.field
    while True:
        ray = bundle.rays[rng.integers(0, len(bundle.rays))]
        p = ray.point_at(float(rng.uniform(0.4, 2.2)))
        if grid.box.contains(p):
            cell = grid.box.size / np.array(grid.resolution)
            idx = tuple(int(v) for v in np.clip(np.floor((p - grid.box.mn) / cell), 0, np.array(grid.resolution) - 1))
            return idx, partitioner.locate(tree, grid.voxel_center(idx))


def test_gradient_local_matches_global(voxel_probe):
    bundle, tree, probe = voxel_probe
    rng = np.random.default_rng(3)
    for _ in range(10):
        idx, owner = _touched_voxel(bundle, tree, rng)
        local, global_ = probe.gradient_pair(owner, ParamRef(owner, idx), 1e-4)
        assert abs(local - global_) <= 1e-6 * (1.0 + abs(global_))


def test_gradient_untouched_voxel_is_zero(voxel_probe):
    bundle, tree, probe = voxel_probe
    # the room's ceiling corner at max y/z is crossed by no shipped ray
    grid = bundle.scene.field
    idx = (0, grid.resolution[1] - 1, grid.resolution[2] - 1)
    owner = partitioner.locate(tree, grid.voxel_center(idx))
    local, global_ = probe.gradient_pair(owner, ParamRef(owner, idx), 1e-4)
    assert local == 0.0 and global_ == 0.0


def test_gradient_single_tile_partition(voxel_probe):
    bundle, _, _ = voxel_probe
    tree1 = partitioner.build_tree(bundle.points, bundle.scene.root_box, 0)
    probe = DistributedLossProbe(bundle.scene, tree1, bundle.rays[:6], bundle.dt)
    idx, owner = _touched_voxel(bundle, tree1, np.random.default_rng(4))
    assert owner == 0
    local, global_ = probe.gradient_pair(0, ParamRef(0, idx), 1e-4)
    assert local == global_


def test_gradient_param_ownership_enforced(voxel_probe):
    bundle, tree, probe = voxel_probe
    idx, owner = _touched_voxel(bundle, tree, np.random.default_rng(5))
    wrong = (owner + 1) % len(tree.leaves)
    with pytest.raises(ParamNotOwnedError):
        probe.gradient_pair(wrong, ParamRef(wrong, idx), 1e-4)
    with pytest.raises(ParamNotOwnedError):
        probe.gradient_pair(owner, ParamRef(owner, (999, 0, 0)), 1e-4)
