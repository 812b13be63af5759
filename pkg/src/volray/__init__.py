"""volray: a tiled distributed volume renderer and multi-worker simulator.

Disjoint spatial tiles are owned by independent workers; each worker
composites its own ray segment into a small aggregate, and aggregates are
alpha-composited in geometric order into results identical to monolithic
rendering while exchanging a constant amount of data per ray per worker.
"""

from .baselines import (
    OverlappedTiles,
    WeightMismatchError,
    camera_tile_weights,
    expand_tiles,
    redundancy_fraction,
    render_blend2d,
    render_blend3d,
    tile_fields,
)
from .breakable import BreakableSpec, check_split_invariance, fold, shipped_instances
from .distsim import (
    Camera,
    CommStats,
    ProtocolMismatchError,
    Worker,
    WorkerPool,
    bench_protocols,
    render_image,
    render_ray,
    spawn,
    stats_json,
    write_ppm,
)
from .field import (
    ConstantBox,
    Field,
    GaussianBlob,
    GaussianBlobs,
    MaskedField,
    Scene,
    SumField,
    VoxelGrid,
    eval_rgb,
    eval_sigma,
    load_scene,
    save_scene,
)
from .geometry import Aabb, Ray, ray_box_intersect, unit, vec3
from .partitioner import (
    DegenerateSplitError,
    InsufficientPointsError,
    NoPointsError,
    OutOfBoundsError,
    PartitionTree,
    PointCloud,
    balance_report,
    build_tree,
    choose_split,
    load_points,
    load_tree,
    locate,
    rays_to_points,
    save_tree,
)
from .quadrature import (
    RayAggregate,
    SampleInterval,
    composite_samples,
    distortion_bruteforce,
    fill_samples,
    generate_samples,
    integrate_ray,
    split_at_planes,
)
from .segrender import (
    DistributedLossProbe,
    NegativeLossError,
    NonFiniteInputError,
    ParamNotOwnedError,
    ParamRef,
    SegmentAggregate,
    aggregate_segment,
    compose_distortion,
    compose_render,
    local_gradient_fd,
)

__version__ = "0.1.0"
