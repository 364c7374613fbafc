"""Built-in scene workers: each builds one randomized Scene from a seed.

Workers only construct; the runtime simulates (when the scene's info
carries simulate=True) and renders.  Draw order against the seeded rng
is part of each worker's contract and must not be reordered:

  movi-basic:    n_objects, then per object (shape, scale, hue,
                 placement trials, velocity x, velocity y)
  sod-multiview: salient (shape, scale, hue); hard mode clutter count,
                 then per clutter (shape, scale, hue, placement trials);
                 then per camera frame (radius, elevation, azimuth)
  texture-plane: per patch the noise field, then cameras as in sod
"""

import colorsys
import math

import numpy as np

from .camera import look_at
from .errors import InvalidCutoff, UnknownWorker
from .mesh import make_box, make_primitive
from .physics import World, place_without_overlap
from .rng import Rng
from .scene import DirectionalLight, PerspectiveCamera, PointLight, RigidObject, Scene
from .shapes import make_collision_shape

PRIMITIVE_KINDS = ("cube", "sphere", "cylinder", "cone", "torus")

MOVI_DEFAULTS = {
    "min_objects": 3,
    "max_objects": 10,
    "scale_range": (0.7, 1.4),
    "spawn_region": ((-4.0, -4.0, 1.5), (4.0, 4.0, 4.5)),
    "velocity_range": (-4.0, 4.0),
}

SOD_DEFAULTS = {
    "hard": False,
    "num_views": 10,
    "radius_range": (3.0, 5.0),
    "elevation_range_deg": (15.0, 75.0),
    "clutter_region": ((-2.5, -2.5, -1.5), (2.5, 2.5, 1.5)),
}

TEXTURE_DEFAULTS = {
    "cutoffs": (10.0**-0.5, 1.0, 10.0**0.5, 10.0, 100.0),
    "noise_size": 256,
}


def _hue_albedo(hue):
    return colorsys.hsv_to_rgb(hue, 0.9, 0.9)


def _primitive_object(uid, kind, scale, hue):
    mesh = make_primitive(kind, 1.0)
    obj = RigidObject(
        uid,
        mesh=mesh,
        collision_shape=make_collision_shape(mesh),
        scale=scale,
        mass=scale**3,
        asset_ref=kind,
    )
    obj.material.albedo = _hue_albedo(hue)
    return obj


def worker_movi_basic(seed, config=None):
    """Falling primitives on a static floor, 24 frames at 12 fps."""
    cfg = dict(MOVI_DEFAULTS, **(config or {}))
    rng = Rng(seed)
    sc = Scene(frame_start=0, frame_end=23, frame_rate=12)
    sc.master_rng_state = seed

    floor_mesh = make_box((10.0, 10.0, 0.5))
    floor = RigidObject(
        "floor",
        mesh=floor_mesh,
        collision_shape=make_collision_shape(floor_mesh),
        position=(0.0, 0.0, -0.5),  # top face at z = 0
        is_static=True,
        asset_ref="floor",
    )
    sc.add_asset(floor)
    sc.add_asset(PointLight("lamp", position=(4.0, -4.0, 8.0), color=(80.0, 80.0, 80.0)))
    sc.camera = PerspectiveCamera(
        position=(8.0, -8.0, 5.5),
        quaternion=look_at((8.0, -8.0, 5.5), (0.0, 0.0, 1.0)),
        focal_length=35.0,
        sensor_width=32.0,
    )

    world = World(gravity=sc.gravity)
    world.add_body(floor)

    lo, hi = cfg["min_objects"], cfg["max_objects"]
    n = lo + rng.randint(hi - lo + 1)
    smin, smax = cfg["scale_range"]
    vmin, vmax = cfg["velocity_range"]
    for i in range(n):
        kind = PRIMITIVE_KINDS[rng.randint(len(PRIMITIVE_KINDS))]
        scale = smin + rng.uniform() * (smax - smin)
        obj = _primitive_object(f"object_{i:02d}", kind, scale, rng.uniform())
        sc.add_asset(obj)
        world.add_body(obj)
        place_without_overlap(world, obj, cfg["spawn_region"], rng)
        obj.velocity = (
            vmin + rng.uniform() * (vmax - vmin),
            vmin + rng.uniform() * (vmax - vmin),
            0.0,
        )

    sc.info = {
        "worker": "movi-basic",
        "num_objects": n,
        "simulate": True,
        "point_tracks": True,
    }
    return sc


def _hemisphere_cameras(sc, rng, cfg):
    """Keyframe the camera over sc.frames on the upper hemisphere, aimed at origin."""
    rmin, rmax = cfg["radius_range"]
    emin, emax = cfg["elevation_range_deg"]
    cam = PerspectiveCamera(uid="camera")
    sc.camera = cam
    for f in sc.frames:
        radius = rmin + rng.uniform() * (rmax - rmin)
        elev = math.radians(emin + rng.uniform() * (emax - emin))
        azim = rng.uniform() * 2.0 * math.pi
        eye = (
            radius * math.cos(elev) * math.cos(azim),
            radius * math.cos(elev) * math.sin(azim),
            radius * math.sin(elev),
        )
        cam.keyframe_insert("position", f, eye)
        cam.keyframe_insert("quaternion", f, look_at(eye, (0.0, 0.0, 0.0)))


def worker_sod_multiview(seed, config=None):
    """One salient object viewed from 10 hemisphere cameras; no simulation."""
    cfg = dict(SOD_DEFAULTS, **(config or {}))
    rng = Rng(seed)
    sc = Scene(frame_start=0, frame_end=cfg["num_views"] - 1, frame_rate=12)
    sc.master_rng_state = seed

    kind = PRIMITIVE_KINDS[rng.randint(len(PRIMITIVE_KINDS))]
    scale = 0.8 + rng.uniform() * 0.4
    salient = _primitive_object("salient", kind, scale, rng.uniform())
    sc.add_asset(salient)  # segmentation id 1

    if cfg["hard"]:
        world = World(gravity=(0.0, 0.0, 0.0))
        world.add_body(salient)
        n_clutter = 2 + rng.randint(5)
        for i in range(n_clutter):
            ckind = PRIMITIVE_KINDS[rng.randint(len(PRIMITIVE_KINDS))]
            cscale = 0.3 + rng.uniform() * 0.4
            obj = _primitive_object(f"clutter_{i:02d}", ckind, cscale, rng.uniform())
            sc.add_asset(obj)
            world.add_body(obj)
            place_without_overlap(world, obj, cfg["clutter_region"], rng)

    sc.add_asset(
        DirectionalLight("sun", direction=(0.3, -0.2, -1.0), color=(0.9, 0.9, 0.9))
    )
    sc.ambient_light = (0.15, 0.15, 0.15)
    _hemisphere_cameras(sc, rng, cfg)
    sc.info = {"worker": "sod-multiview", "hard": bool(cfg["hard"]), "simulate": False}
    return sc


def band_limited_noise(size, cutoff, rng):
    """White noise with all radial frequencies above cutoff removed, in [0,1].

    cutoff is in cycles per texture.  The frequency-domain mask keeps DC;
    if it removes nothing the input noise is returned rescaled, untouched
    by the transform round trip.
    """
    if math.isnan(cutoff) or cutoff <= 0.0:
        raise InvalidCutoff(f"cutoff must be positive, got {cutoff}")
    if size <= 0 or size & (size - 1):
        raise ValueError(f"size must be a power of two, got {size}")
    noise = np.array(
        [[rng.uniform() for _ in range(size)] for _ in range(size)], dtype=np.float64
    )
    freq = np.fft.fftfreq(size) * size  # integer cycles per texture
    radius = np.hypot(freq[:, None], freq[None, :])
    keep = radius <= cutoff
    if keep.all():
        return _rescale(noise)
    spectrum = np.fft.fft2(noise)
    spectrum[~keep] = 0.0
    return _rescale(np.fft.ifft2(spectrum).real)


def _rescale(field):
    lo = field.min()
    hi = field.max()
    if hi == lo:
        return np.full_like(field, 0.5)
    return (field - lo) / (hi - lo)


def worker_texture_plane(seed, config=None):
    """A row of noise-textured patches, one per cutoff; hemisphere cameras."""
    cfg = dict(TEXTURE_DEFAULTS, **(config or {}))
    cutoffs = list(cfg["cutoffs"])
    if not cutoffs:
        raise InvalidCutoff("cutoffs must be non-empty")
    rng = Rng(seed)
    sc = Scene(frame_start=0, frame_end=9, frame_rate=12)
    sc.master_rng_state = seed

    size = 2.0
    cutoff_by_id = {}
    for k, cutoff in enumerate(cutoffs):
        mesh = make_primitive("quad", size)
        patch = RigidObject(
            f"patch_{k}",
            mesh=mesh,
            position=((k - (len(cutoffs) - 1) / 2.0) * size, 0.0, 0.0),
            is_static=True,
            asset_ref="quad",
        )
        patch.material.texture = np.repeat(
            band_limited_noise(cfg["noise_size"], cutoff, rng)[:, :, None], 3, axis=2
        )
        sc.add_asset(patch)
        cutoff_by_id[patch.segmentation_id] = float(cutoff)

    sc.ambient_light = (1.0, 1.0, 1.0)  # unshaded: rgba equals the texture
    _hemisphere_cameras(sc, rng, dict(SOD_DEFAULTS))
    sc.info = {
        "worker": "texture-plane",
        "cutoff_by_segmentation": {str(k): v for k, v in cutoff_by_id.items()},
        "simulate": False,
    }
    return sc


WORKERS = {
    "movi-basic": worker_movi_basic,
    "sod-multiview": worker_sod_multiview,
    "texture-plane": worker_texture_plane,
}


def get_worker(name):
    try:
        return WORKERS[name]
    except KeyError:
        raise UnknownWorker(
            f"unknown worker {name!r}; available: {', '.join(sorted(WORKERS))}"
        ) from None
