"""Analytic volumetric scenes: density and color queryable at any 3D point.

These fields stand in for trained radiance fields. Density is non-negative
and finite everywhere, colors are in [0, 1] per channel, and evaluation is a
pure function of position, so exact oracles can be computed against them.

Scene config files use JSON syntax:

    {
      "root_box": {"min": [x, y, z], "max": [x, y, z]},
      "field": <field object>,
      "background": [r, g, b]
    }

Field objects are tagged by "type":

    {"type": "gaussian_blobs", "blobs": [
        {"center": [..], "amplitude": a, "scale": s, "color": [r, g, b]}, ...]}
    {"type": "constant_box", "box": {..}, "density": d, "color": [r, g, b]}
    {"type": "voxel_grid", "box": {..}, "resolution": [nx, ny, nz],
     "densities": [flat row-major floats], "colors": [flat row-major [r,g,b]],
     "interpolation": "trilinear" | "nearest"}
    {"type": "sum", "children": [<field>, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Aabb, vec3

BLACK = np.zeros(3)


def _rgb(c) -> np.ndarray:
    c = vec3(c)
    if np.any(c < 0.0) or np.any(c > 1.0):
        raise ValueError(f"color components must be in [0,1], got {c}")
    return c


class Field:
    """Base interface: vectorized density and color queries.

    ``sigma_many(pts)`` maps an (N, 3) array of positions to (N,) densities.
    ``rgb_many(pts, view_dir)`` maps positions to (N, 3) colors; the view
    direction is accepted for interface stability but unused by the built-in
    fields. Points with zero density report black for bounded fields.
    """

    def sigma_many(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rgb_many(self, pts: np.ndarray, view_dir=None) -> np.ndarray:
        raise NotImplementedError


def eval_sigma(field: Field, p) -> float:
    """Density at a single point (total function, >= 0)."""
    return float(field.sigma_many(vec3(p)[None, :])[0])


def eval_rgb(field: Field, p, view_dir=None) -> np.ndarray:
    """Color at a single point, componentwise in [0, 1]."""
    return field.rgb_many(vec3(p)[None, :], view_dir)[0]


@dataclass(frozen=True)
class GaussianBlob:
    center: np.ndarray
    amplitude: float  # peak density, 1/m
    scale: float  # standard deviation, m
    color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "color", _rgb(self.color))
        if self.amplitude < 0.0:
            raise ValueError("blob amplitude must be >= 0")
        if self.scale <= 0.0:
            raise ValueError("blob scale must be > 0")


@dataclass(frozen=True)
class GaussianBlobs(Field):
    """Sum of isotropic Gaussian density bumps with density-weighted colors."""

    blobs: tuple

    def __post_init__(self):
        object.__setattr__(self, "blobs", tuple(self.blobs))

    def _per_blob_sigma(self, pts):
        out = np.empty((len(self.blobs), len(pts)))
        for i, b in enumerate(self.blobs):
            d2 = np.sum((pts - b.center) ** 2, axis=1)
            out[i] = b.amplitude * np.exp(-0.5 * d2 / (b.scale * b.scale))
        return out

    def sigma_many(self, pts):
        return self._per_blob_sigma(pts).sum(axis=0)

    def rgb_many(self, pts, view_dir=None):
        w = self._per_blob_sigma(pts)  # (k, n)
        colors = np.array([b.color for b in self.blobs])  # (k, 3)
        total = w.sum(axis=0)
        weighted = w.T @ colors  # (n, 3)
        uniform = colors.mean(axis=0)
        safe = np.where(total > 0.0, total, 1.0)
        return np.where(total[:, None] > 0.0, weighted / safe[:, None], uniform)


@dataclass(frozen=True)
class ConstantBox(Field):
    """Uniform density inside a box, zero (and black) outside."""

    box: Aabb
    density: float
    color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "color", _rgb(self.color))
        if self.density < 0.0:
            raise ValueError("density must be >= 0")

    def sigma_many(self, pts):
        return np.where(self.box.contains_many(pts), self.density, 0.0)

    def rgb_many(self, pts, view_dir=None):
        return np.where(self.box.contains_many(pts)[:, None], self.color, BLACK)


@dataclass(frozen=True)
class VoxelGrid(Field):
    """Density/color samples at cell centers over a box.

    Trilinear interpolation clamps at boundary cells, so evaluation is total;
    outside the box the density is zero and the color black.
    """

    box: Aabb
    densities: np.ndarray  # (nx, ny, nz)
    colors: np.ndarray  # (nx, ny, nz, 3)
    interpolation: str = "trilinear"

    def __post_init__(self):
        d = np.asarray(self.densities, dtype=np.float64)
        c = np.asarray(self.colors, dtype=np.float64)
        if d.ndim != 3:
            raise ValueError("densities must have shape (nx, ny, nz)")
        if c.shape != d.shape + (3,):
            raise ValueError("colors must have shape (nx, ny, nz, 3)")
        if np.any(d < 0.0) or not np.all(np.isfinite(d)):
            raise ValueError("densities must be finite and >= 0")
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("color components must be in [0,1]")
        if self.interpolation not in ("nearest", "trilinear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        object.__setattr__(self, "densities", d)
        object.__setattr__(self, "colors", c)

    @property
    def resolution(self):
        return self.densities.shape

    def _cell_size(self):
        return self.box.size / np.array(self.resolution, dtype=np.float64)

    def voxel_center(self, index) -> np.ndarray:
        return self.box.mn + (np.asarray(index, dtype=np.float64) + 0.5) * self._cell_size()

    def _lookup(self, values, pts):
        res = np.array(self.resolution)
        u = (pts - self.box.mn) / self._cell_size()
        if self.interpolation == "nearest":
            idx = np.clip(np.floor(u).astype(int), 0, res - 1)
            return values[idx[:, 0], idx[:, 1], idx[:, 2]]
        # trilinear over cell centers, clamped at the boundary layer
        u = u - 0.5
        i0 = np.clip(np.floor(u).astype(int), 0, np.maximum(res - 2, 0))
        i1 = np.minimum(i0 + 1, res - 1)
        f = np.clip(u - i0, 0.0, 1.0)
        out = None
        for cx, wx in ((i0[:, 0], 1.0 - f[:, 0]), (i1[:, 0], f[:, 0])):
            for cy, wy in ((i0[:, 1], 1.0 - f[:, 1]), (i1[:, 1], f[:, 1])):
                for cz, wz in ((i0[:, 2], 1.0 - f[:, 2]), (i1[:, 2], f[:, 2])):
                    w = wx * wy * wz
                    v = values[cx, cy, cz]
                    term = v * (w[:, None] if v.ndim == 2 else w)
                    out = term if out is None else out + term
        return out

    def sigma_many(self, pts):
        inside = self.box.contains_many(pts)
        out = np.zeros(len(pts))
        if np.any(inside):
            out[inside] = self._lookup(self.densities, pts[inside])
        return out

    def rgb_many(self, pts, view_dir=None):
        inside = self.box.contains_many(pts)
        out = np.zeros((len(pts), 3))
        if np.any(inside):
            out[inside] = np.clip(self._lookup(self.colors, pts[inside]), 0.0, 1.0)
        return out


@dataclass(frozen=True)
class SumField(Field):
    """Superposition: densities add exactly, colors mix density-weighted.

    Where the total density is zero the color falls back to the uniform mean
    of the children's colors at that point.
    """

    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise ValueError("sum field needs at least one child")

    def sigma_many(self, pts):
        out = self.children[0].sigma_many(pts)
        for c in self.children[1:]:
            out = out + c.sigma_many(pts)
        return out

    def rgb_many(self, pts, view_dir=None):
        sigmas = np.array([c.sigma_many(pts) for c in self.children])  # (k, n)
        colors = np.array([c.rgb_many(pts, view_dir) for c in self.children])  # (k, n, 3)
        total = sigmas.sum(axis=0)
        weighted = np.einsum("kn,knc->nc", sigmas, colors)
        uniform = colors.mean(axis=0)
        safe = np.where(total > 0.0, total, 1.0)
        return np.where(total[:, None] > 0.0, weighted / safe[:, None], uniform)


@dataclass(frozen=True)
class MaskedField(Field):
    """A field restricted to a box: density zero outside, color passed through.

    ``upper_closed`` marks, per axis, whether the max face belongs to the box.
    Tile masks close only the faces that coincide with the root box, matching
    the half-open tile ownership convention; overlap masks close all faces.
    """

    base: Field
    box: Aabb
    upper_closed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "upper_closed", np.asarray(self.upper_closed, dtype=bool))

    def owns_many(self, pts: np.ndarray) -> np.ndarray:
        low_ok = np.all(pts >= self.box.mn, axis=1)
        up = np.where(self.upper_closed, pts <= self.box.mx, pts < self.box.mx)
        return low_ok & np.all(up, axis=1)

    def sigma_many(self, pts):
        return np.where(self.owns_many(pts), self.base.sigma_many(pts), 0.0)

    def rgb_many(self, pts, view_dir=None):
        return self.base.rgb_many(pts, view_dir)


def tile_mask(base: Field, tile_box: Aabb, root_box: Aabb) -> MaskedField:
    """Mask a field to a partition tile (half-open except at root faces)."""
    return MaskedField(base, tile_box, tile_box.mx == root_box.mx)


def overlap_mask(base: Field, box: Aabb) -> MaskedField:
    """Mask a field to a closed box (overlapping-tile baselines)."""
    return MaskedField(base, box, np.ones(3, dtype=bool))


@dataclass(frozen=True)
class Scene:
    root_box: Aabb
    field: Field
    background: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "background", _rgb(self.background))


def field_to_json(field: Field) -> dict:
    if isinstance(field, GaussianBlobs):
        return {
            "type": "gaussian_blobs",
            "blobs": [
                {
                    "center": [float(v) for v in b.center],
                    "amplitude": float(b.amplitude),
                    "scale": float(b.scale),
                    "color": [float(v) for v in b.color],
                }
                for b in field.blobs
            ],
        }
    if isinstance(field, ConstantBox):
        return {
            "type": "constant_box",
            "box": field.box.to_json(),
            "density": float(field.density),
            "color": [float(v) for v in field.color],
        }
    if isinstance(field, VoxelGrid):
        return {
            "type": "voxel_grid",
            "box": field.box.to_json(),
            "resolution": list(field.resolution),
            "densities": [float(v) for v in field.densities.ravel()],
            "colors": [[float(v) for v in c] for c in field.colors.reshape(-1, 3)],
            "interpolation": field.interpolation,
        }
    if isinstance(field, SumField):
        return {"type": "sum", "children": [field_to_json(c) for c in field.children]}
    raise ValueError(f"field {type(field).__name__} has no config representation")


def field_from_json(d: dict) -> Field:
    kind = d["type"]
    if kind == "gaussian_blobs":
        return GaussianBlobs(
            tuple(
                GaussianBlob(vec3(b["center"]), float(b["amplitude"]), float(b["scale"]), vec3(b["color"]))
                for b in d["blobs"]
            )
        )
    if kind == "constant_box":
        return ConstantBox(Aabb.from_json(d["box"]), float(d["density"]), vec3(d["color"]))
    if kind == "voxel_grid":
        res = tuple(int(n) for n in d["resolution"])
        dens = np.asarray(d["densities"], dtype=np.float64).reshape(res)
        cols = np.asarray(d["colors"], dtype=np.float64).reshape(res + (3,))
        return VoxelGrid(Aabb.from_json(d["box"]), dens, cols, d.get("interpolation", "trilinear"))
    if kind == "sum":
        return SumField(tuple(field_from_json(c) for c in d["children"]))
    raise ValueError(f"unknown field type {kind!r}")


def scene_to_json(scene: Scene) -> dict:
    return {
        "root_box": scene.root_box.to_json(),
        "field": field_to_json(scene.field),
        "background": [float(v) for v in scene.background],
    }


def scene_from_json(d: dict) -> Scene:
    return Scene(Aabb.from_json(d["root_box"]), field_from_json(d["field"]), vec3(d["background"]))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_json(scene), indent=2) + "\n")


def load_scene(path) -> Scene:
    return scene_from_json(json.loads(Path(path).read_text()))
