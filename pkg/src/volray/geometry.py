"""Points, vectors, axis-aligned boxes, rays, and the slab intersection test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def vec3(x, y=None, z=None) -> np.ndarray:
    """Build a float64 3-vector from components or from any length-3 sequence."""
    if y is None:
        v = np.asarray(x, dtype=np.float64)
        if v.shape != (3,):
            raise ValueError(f"expected 3 components, got shape {v.shape}")
        return v.copy()
    return np.array([x, y, z], dtype=np.float64)


def unit(v) -> np.ndarray:
    """Normalize to unit length; raises on the zero vector."""
    v = vec3(v)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box with min strictly below max on every axis."""

    mn: np.ndarray
    mx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mn", vec3(self.mn))
        object.__setattr__(self, "mx", vec3(self.mx))
        if not np.all(self.mn < self.mx):
            raise ValueError(f"degenerate box: min={self.mn} max={self.mx}")

    @property
    def size(self) -> np.ndarray:
        return self.mx - self.mn

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.mn + self.mx)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.size))

    def contains(self, p) -> bool:
        p = vec3(p)
        return bool(np.all(p >= self.mn) and np.all(p <= self.mx))

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        return np.all(pts >= self.mn, axis=1) & np.all(pts <= self.mx, axis=1)

    def to_json(self) -> dict:
        return {"min": [float(v) for v in self.mn], "max": [float(v) for v in self.mx]}

    @staticmethod
    def from_json(d: dict) -> "Aabb":
        return Aabb(vec3(d["min"]), vec3(d["max"]))


@dataclass(frozen=True)
class Ray:
    """Ray with unit direction and a [t_near, t_far) parameter range in meters."""

    origin: np.ndarray
    dir: np.ndarray
    t_near: float = 0.0
    t_far: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "origin", vec3(self.origin))
        object.__setattr__(self, "dir", vec3(self.dir))
        object.__setattr__(self, "t_near", float(self.t_near))
        object.__setattr__(self, "t_far", float(self.t_far))
        n = float(np.linalg.norm(self.dir))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit-norm, |d|={n}")
        if not (0.0 <= self.t_near < self.t_far):
            raise ValueError(f"need 0 <= t_near < t_far, got [{self.t_near}, {self.t_far}]")

    def point_at(self, t: float) -> np.ndarray:
        return self.origin + t * self.dir

    def points_at(self, ts: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(ts, dtype=np.float64)[:, None] * self.dir

    def to_json(self) -> dict:
        return {
            "origin": [float(v) for v in self.origin],
            "dir": [float(v) for v in self.dir],
            "t_near": self.t_near,
            "t_far": self.t_far,
        }

    @staticmethod
    def from_json(d: dict) -> "Ray":
        return Ray(vec3(d["origin"]), unit(d["dir"]), float(d["t_near"]), float(d["t_far"]))


def ray_box_intersect(ray: Ray, box: Aabb):
    """Slab test: the intersection of [t_near, t_far] with a box, or None.

    Returns (t_enter, t_exit) with t_enter < t_exit; a tangential graze
    (zero-length overlap) counts as a miss.
    """
    o, d = ray.origin, ray.dir
    zero = d == 0.0
    if np.any(zero & ((o < box.mn) | (o > box.mx))):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (box.mn - o) / d
        hi = (box.mx - o) / d
    near = np.where(zero, -math.inf, np.minimum(lo, hi))
    far = np.where(zero, math.inf, np.maximum(lo, hi))
    t_enter = max(ray.t_near, float(near.max()))
    t_exit = min(ray.t_far, float(far.min()))
    if t_enter < t_exit:
        return (t_enter, t_exit)
    return None
