import math

import numpy as np
import pytest

from volray.field import ConstantBox, GaussianBlob, GaussianBlobs
from volray.geometry import Aabb, Ray, ray_box_intersect, unit
from volray.quadrature import (
    SampleInterval,
    composite_samples,
    contiguous_runs,
    distortion_bruteforce,
    fill_samples,
    generate_samples,
    integrate_ray,
    split_at_planes,
)

UNIT = Aabb([0, 0, 0], [1, 1, 1])


def bin_at(t0, t1, sigma=0.0, rgb=(0, 0, 0)):
    s = SampleInterval(t0, t1)
    s.sigma = float(sigma)
    s.rgb = np.asarray(rgb, dtype=float)
    return s


# --- ray_box_intersect -------------------------------------------------------

def test_slab_unit_geometry():
    ray = Ray((-1, 0.5, 0.5), (1, 0, 0), 0, 10)
    assert ray_box_intersect(ray, UNIT) == (1.0, 2.0)


def test_slab_parallel_outside_misses():
    ray = Ray((-1, 2.0, 0.5), (1, 0, 0), 0, 10)
    assert ray_box_intersect(ray, UNIT) is None


def test_slab_origin_inside():
    ray = Ray((0.5, 0.5, 0.5), (1, 0, 0), 0, 10)
    assert ray_box_intersect(ray, UNIT) == (0.0, 0.5)


def test_slab_corner_graze_is_a_miss():
    # touches only the corner (0, 1): a zero-length overlap
    ray = Ray((-1, 0, 0.5), unit((1, 1, 0)), 0, 10)
    assert ray_box_intersect(ray, UNIT) is None


# --- generate_samples --------------------------------------------------------

def test_grid_exact_division():
    ray = Ray((-1, 0.5, 0.5), (1, 0, 0), 0, 10)
    samples = generate_samples(ray, UNIT, 0.25)
    edges = [(s.t0, s.t1) for s in samples]
    assert edges == [(1.0, 1.25), (1.25, 1.5), (1.5, 1.75), (1.75, 2.0)]
    assert all(s.m == 0.5 * (s.t0 + s.t1) for s in samples)


def test_grid_truncated_tail():
    ray = Ray((-1, 0.5, 0.5), (1, 0, 0), 0.0, 1.9)
    samples = generate_samples(ray, UNIT, 0.25)
    assert [(s.t0, s.t1) for s in samples] == [(1.0, 1.25), (1.25, 1.5), (1.5, 1.75), (1.75, 1.9)]


def test_grid_miss_returns_empty():
    ray = Ray((-1, 5.0, 0.5), (1, 0, 0), 0, 10)
    assert generate_samples(ray, UNIT, 0.25) == []


def test_grid_rejects_bad_dt():
    ray = Ray((-1, 0.5, 0.5), (1, 0, 0), 0, 10)
    with pytest.raises(ValueError):
        generate_samples(ray, UNIT, 0.0)


# --- split_at_planes ---------------------------------------------------------

def test_split_single_cut():
    out = split_at_planes([SampleInterval(1.0, 2.0)], [1.5])
    assert [(s.t0, s.t1, s.m) for s in out] == [(1.0, 1.5, 1.25), (1.5, 2.0, 1.75)]


def test_split_cuts_outside_are_identity():
    bins = [SampleInterval(1.0, 2.0)]
    out = split_at_planes(bins, [0.5, 2.5])
    assert out == bins


def test_split_two_cuts_in_one_bin():
    out = split_at_planes([SampleInterval(1.0, 2.0)], [1.25, 1.75])
    widths = [s.t1 - s.t0 for s in out]
    assert widths == pytest.approx([0.25, 0.5, 0.25], abs=1e-15)


def test_split_drops_slivers():
    out = split_at_planes([SampleInterval(1.0, 2.0)], [1.0 + 1e-14])
    assert [(s.t0, s.t1) for s in out] == [(1.0 + 1e-14, 2.0)]


def test_split_preserves_union_and_order():
    bins = [SampleInterval(a, a + 0.2) for a in np.arange(0, 2.0, 0.2)]
    out = split_at_planes(bins, [0.3, 0.9, 1.53])
    t0s = [s.t0 for s in out]
    assert t0s == sorted(t0s)
    for a, b in zip(out[:-1], out[1:]):
        assert a.t1 <= b.t0 + 1e-15
    assert out[0].t0 == bins[0].t0 and out[-1].t1 == pytest.approx(bins[-1].t1)


def test_split_requires_sorted_cuts():
    with pytest.raises(ValueError):
        split_at_planes([SampleInterval(0, 1)], [0.5, 0.2])


# --- integrate_ray -----------------------------------------------------------

def test_vacuum_bin():
    agg = composite_samples([bin_at(0, 1, sigma=0.0)])
    assert agg.transmittance == 1.0 and agg.alpha == 0.0 and agg.distortion == 0.0
    np.testing.assert_array_equal(agg.color, [0, 0, 0])


def test_half_opacity_closed_form():
    # sigma * delta = ln 2  ->  alpha = 1/2
    agg = composite_samples([bin_at(0.75, 1.25, sigma=math.log(2.0) / 0.5, rgb=(1, 0, 0))])
    assert agg.alpha == pytest.approx(0.5, rel=1e-15)
    assert agg.transmittance == pytest.approx(0.5, rel=1e-15)
    np.testing.assert_allclose(agg.color, [0.5, 0, 0], rtol=1e-15)
    assert agg.depth == pytest.approx(0.5 * 1.0, rel=1e-15)


def test_two_bin_hand_compositing():
    ln2 = math.log(2.0)
    agg = composite_samples(
        [bin_at(0, 1, sigma=ln2, rgb=(1, 0, 0)), bin_at(1, 2, sigma=ln2, rgb=(0, 0, 1))]
    )
    np.testing.assert_allclose(agg.color, [0.5, 0, 0.25], rtol=1e-14)
    assert agg.transmittance == pytest.approx(0.25, rel=1e-14)


def test_empty_samples_identity():
    agg = composite_samples([])
    assert agg.alpha == 0.0 and agg.transmittance == 1.0 and agg.distortion == 0.0


def test_opacity_conservation_on_random_scenes():
    from volray.verify import random_filled_samples

    for i in range(50):
        _, _, samples = random_filled_samples(np.random.default_rng(i))
        agg = composite_samples(samples)
        assert agg.alpha + agg.transmittance == pytest.approx(1.0, abs=1e-9)


def test_vacuum_scene_is_exact():
    field = ConstantBox(UNIT, 0.0, (1, 1, 1))
    ray = Ray((-1, 0.5, 0.5), (1, 0, 0), 0, 10)
    agg = integrate_ray(field, ray, generate_samples(ray, UNIT, 0.1))
    assert agg.transmittance == 1.0 and agg.alpha == 0.0 and agg.distortion == 0.0
    np.testing.assert_array_equal(agg.color, [0, 0, 0])


def test_refinement_convergence_on_smooth_field():
    # Midpoint evaluation converges at second order on smooth fields, so the
    # error should shrink by ~4x per dt halving; require at least ~1.5x and
    # treat anything above 8x as suspicious.
    root = Aabb([-1, -1, -1], [1, 1, 1])
    field = GaussianBlobs(
        (
            GaussianBlob((0.1, 0.0, -0.2), 6.0, 0.3, (1, 0.2, 0.1)),
            GaussianBlob((-0.3, 0.2, 0.3), 4.0, 0.4, (0.1, 0.9, 0.4)),
        )
    )
    ray = Ray((-2, 0.1, 0.05), unit((1, -0.04, -0.02)), 0, 10)
    ref = integrate_ray(field, ray, generate_samples(ray, root, 0.1 / 64))
    errs = []
    for dt in (0.1, 0.05, 0.025):
        agg = integrate_ray(field, ray, generate_samples(ray, root, dt))
        errs.append(float(np.max(np.abs(agg.color - ref.color))))
    for coarse, fine in zip(errs[:-1], errs[1:]):
        assert 1.5 <= coarse / fine <= 8.0


# --- distortion_bruteforce ---------------------------------------------------

def test_distortion_single_sample_is_zero():
    assert distortion_bruteforce([0.7], [2.0]) == 0.0


def test_distortion_hand_pairwise_sum():
    # 2 * (0.5 * 0.5 * |1 - 3|) = 1.0
    assert distortion_bruteforce([0.5, 0.5], [1.0, 3.0]) == pytest.approx(1.0, rel=1e-15)


def test_distortion_equal_midpoints_is_zero():
    assert distortion_bruteforce([0.2, 0.3, 0.5], [2.0, 2.0, 2.0]) == 0.0


def test_distortion_permutation_invariant():
    rng = np.random.default_rng(7)
    w = rng.uniform(0, 1, 20)
    m = rng.uniform(0, 5, 20)
    base = distortion_bruteforce(w, m)
    for _ in range(5):
        p = rng.permutation(20)
        assert distortion_bruteforce(w[p], m[p]) == pytest.approx(base, rel=1e-12)


def test_distortion_ordered_equals_twice_strict():
    # dyadic values make every product and sum exact, so equality is bitwise
    w = np.array([0.5, 0.25, 0.25])
    m = np.array([1.0, 2.0, 4.0])
    strict = sum(
        w[i] * w[j] * abs(m[i] - m[j]) for i in range(3) for j in range(i + 1, 3)
    )
    assert distortion_bruteforce(w, m) == 2.0 * strict
    # and within round-off on arbitrary values
    rng = np.random.default_rng(8)
    w = rng.uniform(0, 1, 15)
    m = rng.uniform(0, 3, 15)
    strict = sum(w[i] * w[j] * abs(m[i] - m[j]) for i in range(15) for j in range(i + 1, 15))
    assert distortion_bruteforce(w, m) == pytest.approx(2.0 * strict, rel=1e-12)


def test_distortion_rejects_length_mismatch():
    with pytest.raises(ValueError):
        distortion_bruteforce([1.0], [1.0, 2.0])


# --- helpers -----------------------------------------------------------------

def test_contiguous_runs_split_on_gaps():
    bins = [SampleInterval(0, 1), SampleInterval(1, 2), SampleInterval(3, 4)]
    runs = contiguous_runs(bins)
    assert [len(r) for r in runs] == [2, 1]
    assert runs[0][1].t1 == 2


def test_fill_samples_evaluates_midpoints():
    field = ConstantBox(UNIT, 2.0, (0, 1, 0))
    ray = Ray((-1, 0.5, 0.5), (1, 0, 0), 0, 10)
    samples = generate_samples(ray, UNIT, 0.5)
    fill_samples(field, ray, samples)
    assert all(s.sigma == 2.0 for s in samples)
    assert all(np.array_equal(s.rgb, [0, 1, 0]) for s in samples)
