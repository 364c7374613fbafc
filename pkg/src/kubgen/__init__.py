"""Deterministic synthetic scene data generator.

Builds physically simulated scenes, renders exact per-pixel annotations
(color, depth, segmentation, normals, object coordinates, optical flow)
with a ray caster, and exports self-describing records plus evaluation
metrics for the tasks those annotations supervise.
"""

from . import errors
from .assets import AssetManifest, build_object, parse_manifest, serialize_manifest
from .bvh import Bvh, build_bvh
from .camera import Ray, generate_ray, intrinsics, look_at, project
from .mesh import TriangleMesh, convex_hull, dump_mesh, load_mesh, make_primitive, mass_properties
from .metrics import (
    FlowMetrics,
    TrackMetrics,
    aepe,
    error_rate,
    fg_ari,
    flow_metrics,
    naive_baseline,
    psnr,
    track_metrics,
)
from .physics import (
    ContactEvent,
    SimulationResult,
    World,
    check_overlap,
    epa_penetration,
    gjk_distance,
    place_without_overlap,
    simulate,
    step,
    support,
)
from .records import (
    SceneRecord,
    compute_bbox_2d,
    read_raster,
    read_scene_record,
    write_raster,
    write_scene_record,
)
from .render import (
    FrameBundle,
    HitRecord,
    RenderState,
    compute_flow,
    intersect,
    render_frame,
    shade,
)
from .rng import Rng, derive_scene_seed
from .runtime import JobSpec, run_job
from .scene import (
    DirectionalLight,
    KeyframeTrack,
    Material,
    PerspectiveCamera,
    PointLight,
    RigidObject,
    Scene,
)
from .shapes import CollisionShape, make_collision_shape
from .tracks import PointTrack, extract_point_tracks
from .workers import (
    band_limited_noise,
    get_worker,
    worker_movi_basic,
    worker_sod_multiview,
    worker_texture_plane,
)

__all__ = [
    "AssetManifest",
    "Bvh",
    "CollisionShape",
    "ContactEvent",
    "DirectionalLight",
    "FlowMetrics",
    "FrameBundle",
    "HitRecord",
    "JobSpec",
    "KeyframeTrack",
    "Material",
    "PerspectiveCamera",
    "PointLight",
    "PointTrack",
    "Ray",
    "RenderState",
    "RigidObject",
    "Rng",
    "Scene",
    "SceneRecord",
    "SimulationResult",
    "TrackMetrics",
    "TriangleMesh",
    "World",
    "aepe",
    "band_limited_noise",
    "build_bvh",
    "build_object",
    "check_overlap",
    "compute_bbox_2d",
    "compute_flow",
    "convex_hull",
    "derive_scene_seed",
    "dump_mesh",
    "epa_penetration",
    "error_rate",
    "errors",
    "extract_point_tracks",
    "fg_ari",
    "flow_metrics",
    "generate_ray",
    "get_worker",
    "gjk_distance",
    "intersect",
    "intrinsics",
    "load_mesh",
    "look_at",
    "make_collision_shape",
    "make_primitive",
    "mass_properties",
    "naive_baseline",
    "parse_manifest",
    "place_without_overlap",
    "project",
    "psnr",
    "read_raster",
    "read_scene_record",
    "render_frame",
    "run_job",
    "serialize_manifest",
    "shade",
    "simulate",
    "step",
    "support",
    "track_metrics",
    "worker_movi_basic",
    "worker_sod_multiview",
    "worker_texture_plane",
    "write_raster",
    "write_scene_record",
]

__version__ = "0.1.0"
