"""Message-passing simulation of the multi-worker renderer.

One worker owns each tile and evaluates the scene only inside its box. A
render job is driven by an orchestrator that assigns ray samples, collects
immutable payload messages, and composes the result in geometric order, so
the output is independent of worker scheduling and message arrival order.

Three protocols are supported over the same per-ray bin grid (the grid is
split at tile boundaries so all protocols integrate the identical bin set):

  mono             single pass over the unpartitioned scene; zero traffic.
  sample_broadcast every worker ships (t0, t1, sigma, r, g, b) per bin, the
                   compositor redoes the full quadrature. Payload cost is
                   1 + 6 * n_samples scalars per worker per ray.
  tile_aggregate   every worker pre-composites its segment and ships one
                   (ray_id, order_t, T, Cr, Cg, Cb, A, D, L) packet: 9
                   scalars per worker per ray, independent of step size.

Communication cost is counted in payload scalars, a deterministic proxy for
synchronization traffic; control messages (ray assignments, results) are not
counted. With ``broadcast_all`` every tile payload is additionally delivered
to every other participating worker, which then must all compose identical
results, mirroring a training step where each worker needs the same loss.
"""

from __future__ import annotations

import math
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import partitioner
from .field import Scene, tile_mask
from .geometry import Aabb, Ray, ray_box_intersect, unit, vec3
from .quadrature import (
    RayAggregate,
    SampleInterval,
    composite_samples,
    contiguous_runs,
    empty_aggregate,
    fill_samples,
    generate_samples,
    split_at_planes,
)
from .segrender import SegmentAggregate, compose_distortion, compose_render, identity_aggregate

PROTOCOLS = ("mono", "sample_broadcast", "tile_aggregate")
_ALIASES = {"sample": "sample_broadcast", "tile": "tile_aggregate"}
COMPOSITOR = -1

# Wire scalar counts: 6 per sample plus the ray id, and 9 per tile packet
# (ray id and order_t included).
SCALARS_PER_SAMPLE = 6
SCALARS_PER_TILE_PACKET = 9


class ProtocolMismatchError(RuntimeError):
    """Raised for an empty pool or inconsistent broadcast composition."""


def canonical_protocol(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in PROTOCOLS:
        raise ValueError(f"unknown protocol {name!r}; choose from {PROTOCOLS + tuple(_ALIASES)}")
    return name


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; one primary ray through each pixel center."""

    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    vertical_fov_deg: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        object.__setattr__(self, "look_at", vec3(self.look_at))
        object.__setattr__(self, "up", vec3(self.up))
        if not 0.0 < self.vertical_fov_deg < 180.0:
            raise ValueError("vertical fov must be in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")

    def to_json(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "look_at": [float(v) for v in self.look_at],
            "up": [float(v) for v in self.up],
            "vertical_fov_deg": float(self.vertical_fov_deg),
            "width": self.width,
            "height": self.height,
        }

    @staticmethod
    def from_json(d: dict) -> "Camera":
        return Camera(
            vec3(d["position"]),
            vec3(d["look_at"]),
            vec3(d["up"]),
            float(d["vertical_fov_deg"]),
            int(d["width"]),
            int(d["height"]),
        )


def camera_ray_dirs(camera: Camera) -> np.ndarray:
    """Unit directions through all pixel centers, row-major (h*w, 3)."""
    forward = unit(camera.look_at - camera.position)
    right = unit(np.cross(forward, camera.up))
    up = np.cross(right, forward)
    half_h = math.tan(math.radians(camera.vertical_fov_deg) / 2.0)
    half_w = half_h * camera.width / camera.height
    i = (np.arange(camera.width) + 0.5) / camera.width * 2.0 - 1.0
    j = 1.0 - (np.arange(camera.height) + 0.5) / camera.height * 2.0
    xs, ys = np.meshgrid(i * half_w, j * half_h)
    dirs = forward + xs.reshape(-1, 1) * right + ys.reshape(-1, 1) * up
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


# --- messages -----------------------------------------------------------

@dataclass(frozen=True)
class RayAssignment:
    """Control message: a ray plus the bins the worker owns (uncounted)."""

    ray_id: int
    ray: Ray
    bins: tuple
    entry_t: float


@dataclass(frozen=True)
class SamplePayload:
    """Per-sample wire data: (t0, t1, sigma, r, g, b) tuples plus the ray id."""

    ray_id: int
    bins: tuple

    @property
    def scalar_count(self) -> int:
        return 1 + SCALARS_PER_SAMPLE * len(self.bins)


@dataclass(frozen=True)
class TilePayload:
    """Per-ray wire data: ray id, order_t, T, Cr, Cg, Cb, A, D, L."""

    ray_id: int
    order_t: float
    transmittance: float
    cr: float
    cg: float
    cb: float
    alpha: float
    depth: float
    distortion: float

    @property
    def scalar_count(self) -> int:
        return SCALARS_PER_TILE_PACKET

    def to_segment(self) -> SegmentAggregate:
        return SegmentAggregate(
            self.transmittance,
            np.array([self.cr, self.cg, self.cb]),
            self.alpha,
            self.depth,
            self.distortion,
            self.order_t,
        )


@dataclass(frozen=True)
class Result:
    """Control message from the compositor back to the orchestrator."""

    ray_id: int
    aggregate: RayAggregate


# --- communication accounting -------------------------------------------

@dataclass
class WorkerStats:
    scalars_sent: int = 0
    scalars_received: int = 0
    messages_sent: int = 0
    messages_received: int = 0


@dataclass
class CommStats:
    """Payload-scalar accounting per worker, plus per-phase wall clock.

    Conservation holds exactly: every recorded send has one recorded
    receive, so scalars_sent_total == scalars_received_total.
    """

    rays: int = 0
    participations: int = 0
    samples_assigned: int = 0
    workers: dict = dc_field(default_factory=dict)
    compositor: WorkerStats = dc_field(default_factory=WorkerStats)
    phase_seconds: dict = dc_field(default_factory=dict)

    def _party(self, party_id: int) -> WorkerStats:
        if party_id == COMPOSITOR:
            return self.compositor
        return self.workers.setdefault(party_id, WorkerStats())

    def record(self, sender: int, receiver: int, scalars: int) -> None:
        s = self._party(sender)
        r = self._party(receiver)
        s.scalars_sent += scalars
        s.messages_sent += 1
        r.scalars_received += scalars
        r.messages_received += 1

    def add_time(self, phase: str, seconds: float) -> None:
        self.phase_seconds[phase] = self.phase_seconds.get(phase, 0.0) + seconds

    @property
    def scalars_sent_total(self) -> int:
        return sum(w.scalars_sent for w in self.workers.values()) + self.compositor.scalars_sent

    @property
    def scalars_received_total(self) -> int:
        return sum(w.scalars_received for w in self.workers.values()) + self.compositor.scalars_received

    @property
    def messages_sent_total(self) -> int:
        return sum(w.messages_sent for w in self.workers.values()) + self.compositor.messages_sent

    def samples_per_ray_mean(self) -> float:
        return self.samples_assigned / self.rays if self.rays else 0.0

    def samples_per_participation(self) -> float:
        return self.samples_assigned / self.participations if self.participations else 0.0

    def merge(self, other: "CommStats") -> None:
        self.rays += other.rays
        self.participations += other.participations
        self.samples_assigned += other.samples_assigned
        for tid, ws in other.workers.items():
            mine = self._party(tid)
            mine.scalars_sent += ws.scalars_sent
            mine.scalars_received += ws.scalars_received
            mine.messages_sent += ws.messages_sent
            mine.messages_received += ws.messages_received
        self.compositor.scalars_sent += other.compositor.scalars_sent
        self.compositor.scalars_received += other.compositor.scalars_received
        self.compositor.messages_sent += other.compositor.messages_sent
        self.compositor.messages_received += other.compositor.messages_received
        for phase, sec in other.phase_seconds.items():
            self.add_time(phase, sec)


def stats_json(stats: CommStats, protocol: str, num_workers: int) -> dict:
    per_worker = []
    for tid in range(num_workers):
        ws = stats.workers.get(tid, WorkerStats())
        per_worker.append(
            {
                "tile_id": tid,
                "scalars_sent": ws.scalars_sent,
                "scalars_received": ws.scalars_received,
                "messages_sent": ws.messages_sent,
            }
        )
    return {
        "protocol": protocol,
        "num_workers": num_workers,
        "rays": stats.rays,
        "scalars_sent_total": stats.scalars_sent_total,
        "per_worker": per_worker,
        "samples_per_ray_mean": stats.samples_per_ray_mean(),
    }


# --- workers --------------------------------------------------------------

class Worker:
    """One tile owner: a masked field, an inbox, and pure message handling."""

    def __init__(self, tile_id: int, box: Aabb, field):
        self.tile_id = tile_id
        self.box = box
        self.field = field
        self.inbox = deque()
        self.lock = threading.Lock()

    def deliver(self, msg: RayAssignment) -> None:
        self.inbox.append(msg)

    def process_inbox(self, protocol: str) -> list:
        out = []
        while self.inbox:
            a = self.inbox.popleft()
            bins = list(a.bins)
            fill_samples(self.field, a.ray, bins)
            if protocol == "sample_broadcast":
                wire = tuple(
                    (s.t0, s.t1, s.sigma, float(s.rgb[0]), float(s.rgb[1]), float(s.rgb[2]))
                    for s in bins
                )
                out.append(SamplePayload(a.ray_id, wire))
            else:
                runs = contiguous_runs(bins)
                if not runs:
                    seg = identity_aggregate(order_t=a.entry_t)
                    out.append(_tile_payload(a.ray_id, seg))
                else:
                    for run in runs:
                        agg = composite_samples(run)
                        seg = SegmentAggregate(
                            agg.transmittance, agg.color, agg.alpha, agg.depth,
                            agg.distortion, run[0].t0,
                        )
                        out.append(_tile_payload(a.ray_id, seg))
        return out


def _tile_payload(ray_id: int, seg: SegmentAggregate) -> TilePayload:
    return TilePayload(
        ray_id,
        seg.order_t,
        seg.transmittance,
        float(seg.color[0]),
        float(seg.color[1]),
        float(seg.color[2]),
        seg.alpha,
        seg.depth,
        seg.distortion,
    )


class WorkerPool:
    def __init__(self, tree, scene: Scene, workers: list):
        self.tree = tree
        self.scene = scene
        self.workers = workers

    @property
    def num_workers(self) -> int:
        return len(self.workers)


def spawn(tree, scene: Scene) -> WorkerPool:
    """One worker per leaf tile, its field masked to the tile box."""
    workers = [
        Worker(leaf.tile_id, leaf.box, tile_mask(scene.field, leaf.box, tree.root_box))
        for leaf in tree.leaves
    ]
    return WorkerPool(tree, scene, workers)


# --- per-ray protocol engine ----------------------------------------------

def _prepare_samples(pool: WorkerPool, ray: Ray, dt: float) -> list:
    samples = generate_samples(ray, pool.tree.root_box, dt)
    if not samples:
        return []
    return split_at_planes(samples, partitioner.tile_cut_distances(pool.tree, ray))


def _compose_tile(payloads: list) -> RayAggregate:
    """payloads: (sender_tile, TilePayload), sorted by (order_t, sender)."""
    ordered = sorted(payloads, key=lambda p: (p[1].order_t, p[0]))
    segments = [p.to_segment() for _, p in ordered]
    agg = compose_render(segments)
    agg.distortion = compose_distortion(segments)
    return agg


def _compose_samples(payloads: list) -> RayAggregate:
    bins = [
        SampleInterval(t0, t1, sigma=sig, rgb=np.array([r, g, b]))
        for _, p in payloads
        for (t0, t1, sig, r, g, b) in p.bins
    ]
    bins.sort(key=lambda s: s.t0)
    return composite_samples(bins)


def _run_ray(pool, ray, ray_id, protocol, dt, stats, rng, broadcast_all) -> RayAggregate:
    stats.rays += 1
    samples = _prepare_samples(pool, ray, dt)
    if protocol == "mono":
        if not samples:
            return empty_aggregate()
        t0 = time.perf_counter()
        agg = composite_samples(fill_samples(pool.scene.field, ray, samples))
        stats.add_time("evaluate", time.perf_counter() - t0)
        return agg

    # Assign bins to owning workers by the midpoint's tile.
    t0 = time.perf_counter()
    groups = {}
    if samples:
        mids = np.array([s.m for s in samples])
        tids = partitioner.locate_many(pool.tree, ray.points_at(mids))
        for s, tid in zip(samples, tids):
            s.tile_id = int(tid)
            groups.setdefault(int(tid), []).append(s)
    participants = []
    for w in pool.workers:
        hit = ray_box_intersect(ray, w.box)
        if hit is not None:
            participants.append((w, hit[0]))
    for w, entry_t in participants:
        bins = tuple(groups.get(w.tile_id, ()))
        with w.lock:
            w.deliver(RayAssignment(ray_id, ray, bins, entry_t))
        stats.participations += 1
        stats.samples_assigned += len(bins)
    stats.add_time("assign", time.perf_counter() - t0)
    if not participants:
        return empty_aggregate()

    # Workers run in arbitrary order; the compositor sorts geometrically.
    t0 = time.perf_counter()
    order = list(participants)
    if rng is not None:
        rng.shuffle(order)
    transit = []
    for w, _ in order:
        with w.lock:
            msgs = w.process_inbox(protocol)
        transit.extend((w.tile_id, m) for m in msgs)
    if rng is not None:
        rng.shuffle(transit)
    stats.add_time("evaluate", time.perf_counter() - t0)

    t0 = time.perf_counter()
    for sender, msg in transit:
        stats.record(sender, COMPOSITOR, msg.scalar_count)
    if protocol == "sample_broadcast":
        agg = _compose_samples(transit)
    else:
        agg = _compose_tile(transit)
        if broadcast_all:
            agg = _broadcast_compose(transit, participants, stats, agg)
    stats.add_time("compose", time.perf_counter() - t0)
    return agg


def _broadcast_compose(transit, participants, stats, reference: RayAggregate) -> RayAggregate:
    """Deliver every tile payload to every other participant; all must agree."""
    for w, _ in participants:
        local = []
        for sender, msg in transit:
            if sender != w.tile_id:
                stats.record(sender, w.tile_id, msg.scalar_count)
            local.append((sender, msg))
        mine = _compose_tile(local)
        same = (
            np.array_equal(mine.color, reference.color)
            and mine.alpha == reference.alpha
            and mine.depth == reference.depth
            and mine.transmittance == reference.transmittance
            and mine.distortion == reference.distortion
        )
        if not same:
            raise ProtocolMismatchError(f"worker {w.tile_id} composed a different result")
    return reference


def render_ray(pool: WorkerPool, ray: Ray, protocol: str, dt: float, rng=None, broadcast_all=False):
    """Render one ray under a protocol; returns (RayAggregate, CommStats delta).

    All protocols integrate the same tile-split bin grid and agree within
    1e-10 relative on every aggregate field. ``rng`` shuffles worker
    execution and message arrival order without changing the result.
    """
    if not pool.workers:
        raise ProtocolMismatchError("worker pool is empty")
    protocol = canonical_protocol(protocol)
    stats = CommStats()
    agg = _run_ray(pool, ray, 0, protocol, dt, stats, rng, broadcast_all)
    return agg, stats


# --- images ----------------------------------------------------------------

def render_image(
    pool: WorkerPool,
    camera: Camera,
    protocol: str,
    dt: float,
    background=None,
    threads: int = 1,
    shuffle_seed=None,
    broadcast_all: bool = False,
):
    """Render one primary ray per pixel; returns (image, CommStats).

    The image is float (h, w, 3) with pixel = C + T * background clamped to
    [0, 1] before quantization. Output bytes are identical across thread
    counts and scheduling shuffles.
    """
    if not pool.workers:
        raise ProtocolMismatchError("worker pool is empty")
    protocol = canonical_protocol(protocol)
    bg = vec3(background) if background is not None else pool.scene.background
    dirs = camera_ray_dirs(camera)
    box = pool.tree.root_box
    t_far = float(np.linalg.norm(box.center - camera.position)) + box.diagonal + 1.0
    image = np.zeros((camera.height, camera.width, 3))
    stats = CommStats()

    def render_row(j: int):
        row_stats = CommStats()
        row = np.zeros((camera.width, 3))
        for i in range(camera.width):
            ray_id = j * camera.width + i
            ray = Ray(camera.position, dirs[ray_id], 0.0, t_far)
            rng = None
            if shuffle_seed is not None:
                rng = np.random.default_rng((shuffle_seed, ray_id))
            agg = _run_ray(pool, ray, ray_id, protocol, dt, row_stats, rng, broadcast_all)
            row[i] = np.clip(agg.color + agg.transmittance * bg, 0.0, 1.0)
        return row, row_stats

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            results = list(pool_exec.map(render_row, range(camera.height)))
    else:
        results = [render_row(j) for j in range(camera.height)]
    for j, (row, row_stats) in enumerate(results):
        image[j] = row
        stats.merge(row_stats)
    return image, stats


def write_ppm(path, image: np.ndarray) -> None:
    """Binary PPM (P6, maxval 255); quantization floor(c * 255 + 0.5)."""
    h, w = image.shape[:2]
    data = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError("expected maxval 255")
    return np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3).reshape(h, w, 3)


# --- protocol benchmark -----------------------------------------------------

def bench_protocols(pool: WorkerPool, camera: Camera, dts, background=None) -> dict:
    """Scalar-traffic totals for both distributed protocols over a dt sweep.

    The tile/sample scalar ratio should track 9 versus (1 + 6 * S) where S
    is the mean samples per ray per worker; the report fits sample/tile
    ratio against S and checks the slope against the 6/9 model within 30%.
    """
    dts = [float(d) for d in dts]
    if not dts:
        raise ValueError("empty dt sweep")
    entries = []
    ratios = []
    for dt in dts:
        totals = {}
        s_bar = 0.0
        for protocol in ("sample_broadcast", "tile_aggregate"):
            _, stats = render_image(pool, camera, protocol, dt, background=background)
            totals[protocol] = stats.scalars_sent_total
            s_bar = stats.samples_per_participation()
            entries.append(
                {
                    "dt": dt,
                    "samples_per_ray_per_worker": s_bar,
                    "protocol": protocol,
                    "scalars_total": stats.scalars_sent_total,
                }
            )
        if totals["tile_aggregate"]:
            ratios.append((s_bar, totals["sample_broadcast"] / totals["tile_aggregate"]))
    report = {"entries": entries, "ratios": [{"s_bar": s, "sample_over_tile": r} for s, r in ratios]}
    model_slope = SCALARS_PER_SAMPLE / SCALARS_PER_TILE_PACKET
    if len(ratios) >= 2:
        xs = np.array([s for s, _ in ratios])
        ys = np.array([r for _, r in ratios])
        slope, intercept = np.polyfit(xs, ys, 1)
        report["fit"] = {
            "slope": float(slope),
            "intercept": float(intercept),
            "model_slope": model_slope,
            "slope_within_30pct": bool(abs(slope - model_slope) <= 0.3 * model_slope),
        }
    else:
        report["fit"] = None
    return report
