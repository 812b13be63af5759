import math

import numpy as np
import pytest

from volray.field import (
    ConstantBox,
    GaussianBlob,
    GaussianBlobs,
    Scene,
    SumField,
    VoxelGrid,
    eval_rgb,
    eval_sigma,
    load_scene,
    save_scene,
    scene_from_json,
    scene_to_json,
    tile_mask,
)
from volray.geometry import Aabb, vec3

UNIT = Aabb([0, 0, 0], [1, 1, 1])


def test_constant_box_sigma():
    f = ConstantBox(UNIT, 2.0, (1, 0, 0))
    assert eval_sigma(f, (0.5, 0.5, 0.5)) == 2.0
    assert eval_sigma(f, (2.0, 0.0, 0.0)) == 0.0


def test_gaussian_blob_closed_form():
    # a * exp(-|p - mu|^2 / (2 s^2)) at distance 1, s = 1
    f = GaussianBlobs((GaussianBlob((0, 0, 0), 1.0, 1.0, (1, 0, 0)),))
    assert eval_sigma(f, (1, 0, 0)) == pytest.approx(math.exp(-0.5), rel=1e-15)


def test_constant_box_rgb_inside():
    f = ConstantBox(UNIT, 1.0, (1, 0, 0))
    np.testing.assert_array_equal(eval_rgb(f, (0.5, 0.5, 0.5)), [1, 0, 0])


def test_sum_color_is_density_weighted():
    # red contributes sigma 3 and blue sigma 1 at p -> (0.75, 0, 0.25)
    p = vec3(0.3, 0.3, 0.3)
    red = GaussianBlobs((GaussianBlob(p, 3.0, 1.0, (1, 0, 0)),))
    blue = GaussianBlobs((GaussianBlob(p, 1.0, 1.0, (0, 0, 1)),))
    c = eval_rgb(SumField((red, blue)), p)
    np.testing.assert_allclose(c, [0.75, 0, 0.25], rtol=1e-15)


def test_sum_color_zero_density_falls_back_to_uniform_mean():
    red = GaussianBlobs((GaussianBlob((0, 0, 0), 1.0, 0.1, (1, 0, 0)),))
    blue = GaussianBlobs((GaussianBlob((0, 0, 0), 1.0, 0.1, (0, 0, 1)),))
    far = (100.0, 0.0, 0.0)  # Gaussian underflows to exactly 0 here
    assert eval_sigma(SumField((red, blue)), far) == 0.0
    np.testing.assert_allclose(eval_rgb(SumField((red, blue)), far), [0.5, 0, 0.5])


def test_superposition_is_exact():
    rng = np.random.default_rng(0)
    a = GaussianBlobs((GaussianBlob((0.2, 0.1, 0.4), 3.0, 0.3, (1, 0, 0)),))
    b = ConstantBox(Aabb([0.1, 0.1, 0.1], [0.8, 0.8, 0.8]), 1.5, (0, 1, 0))
    s = SumField((a, b))
    pts = rng.uniform(-0.5, 1.5, size=(200, 3))
    np.testing.assert_array_equal(s.sigma_many(pts), a.sigma_many(pts) + b.sigma_many(pts))


def test_evaluation_is_deterministic():
    f = GaussianBlobs(
        (
            GaussianBlob((0.2, 0.1, 0.4), 3.0, 0.3, (1, 0, 0)),
            GaussianBlob((-0.3, 0.5, 0.0), 5.0, 0.2, (0, 1, 0)),
        )
    )
    pts = np.random.default_rng(1).uniform(-1, 1, size=(50, 3))
    np.testing.assert_array_equal(f.sigma_many(pts), f.sigma_many(pts.copy()))
    np.testing.assert_array_equal(f.rgb_many(pts), f.rgb_many(pts.copy()))


def test_sigma_nonnegative_and_colors_in_range():
    rng = np.random.default_rng(2)
    grid = VoxelGrid(UNIT, rng.uniform(0, 3, (4, 4, 4)), rng.uniform(0, 1, (4, 4, 4, 3)))
    pts = rng.uniform(-0.5, 1.5, size=(300, 3))
    assert np.all(grid.sigma_many(pts) >= 0)
    rgb = grid.rgb_many(pts)
    assert np.all(rgb >= 0) and np.all(rgb <= 1)


def test_voxel_grid_nearest_and_trilinear():
    dens = np.arange(8, dtype=float).reshape(2, 2, 2)
    cols = np.zeros((2, 2, 2, 3))
    near = VoxelGrid(UNIT, dens, cols, "nearest")
    # point in cell (1, 0, 1)
    assert eval_sigma(near, (0.8, 0.2, 0.8)) == dens[1, 0, 1]
    tri = VoxelGrid(UNIT, dens, cols, "trilinear")
    # at a cell center the interpolation is exact
    assert eval_sigma(tri, (0.25, 0.25, 0.25)) == pytest.approx(dens[0, 0, 0], abs=1e-12)
    # midpoint between two cell centers along x
    assert eval_sigma(tri, (0.5, 0.25, 0.25)) == pytest.approx(
        0.5 * (dens[0, 0, 0] + dens[1, 0, 0]), abs=1e-12
    )
    # clamped at the boundary layer, still finite and in range
    assert eval_sigma(tri, (0.999, 0.999, 0.999)) == pytest.approx(dens[1, 1, 1], abs=1e-9)
    assert eval_sigma(tri, (1.5, 0.5, 0.5)) == 0.0


def test_masked_field_half_open_ownership():
    root = Aabb([0, 0, 0], [2, 1, 1])
    tile = Aabb([0, 0, 0], [1, 1, 1])  # max x face is interior
    f = tile_mask(ConstantBox(root, 2.0, (1, 0, 0)), tile, root)
    assert eval_sigma(f, (0.5, 0.5, 0.5)) == 2.0
    assert eval_sigma(f, (1.0, 0.5, 0.5)) == 0.0  # on the interior face: not owned
    assert eval_sigma(f, (0.5, 1.0, 0.5)) == 2.0  # root face: owned


def test_field_validation():
    with pytest.raises(ValueError):
        ConstantBox(UNIT, -1.0, (1, 0, 0))
    with pytest.raises(ValueError):
        ConstantBox(UNIT, 1.0, (1.5, 0, 0))
    with pytest.raises(ValueError):
        GaussianBlob((0, 0, 0), 1.0, 0.0, (1, 0, 0))
    with pytest.raises(ValueError):
        VoxelGrid(UNIT, -np.ones((2, 2, 2)), np.zeros((2, 2, 2, 3)))


def test_scene_json_roundtrip(tmp_path):
    scene = Scene(
        Aabb([-1, -1, -1], [1, 1, 1]),
        SumField(
            (
                GaussianBlobs((GaussianBlob((0.1, 0.2, 0.3), 4.0, 0.25, (1, 0, 0)),)),
                ConstantBox(Aabb([-0.5, -0.5, -0.5], [0, 0, 0]), 2.0, (0, 1, 0)),
                VoxelGrid(
                    Aabb([0, 0, 0], [1, 1, 1]),
                    np.random.default_rng(3).uniform(0, 2, (2, 3, 2)),
                    np.random.default_rng(4).uniform(0, 1, (2, 3, 2, 3)),
                    "nearest",
                ),
            )
        ),
        vec3(0.2, 0.3, 0.4),
    )
    back = scene_from_json(scene_to_json(scene))
    pts = np.random.default_rng(5).uniform(-1, 1, size=(100, 3))
    np.testing.assert_array_equal(back.field.sigma_many(pts), scene.field.sigma_many(pts))
    np.testing.assert_array_equal(back.field.rgb_many(pts), scene.field.rgb_many(pts))
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    again = load_scene(path)
    np.testing.assert_array_equal(again.background, scene.background)
    np.testing.assert_array_equal(again.field.sigma_many(pts), scene.field.sigma_many(pts))
