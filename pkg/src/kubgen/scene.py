"""Scene graph: assets, keyframe animation, and view synchronization.

A Scene owns rigid bodies, lights, and a camera.  Anything that wants a
live copy of scene state (a simulator binding, a debug console) registers
as a view; every add_asset call and every observed property mutation is
pushed to all views of every scene the asset belongs to.  Consumers that
prefer to pull (the renderer, the bundled simulator) just read the scene
when invoked; the push contract exists so both styles work.

Conventions: right-handed world frame with +Z up, quaternions (w, x, y, z)
kept unit to 1e-9 by the property setters, uniform scale only.
"""

import numpy as np

from . import quat
from .errors import DuplicateAsset, EmptyTrack, InvalidDirection, InvalidRates, UnknownProperty


def _vec3(value):
    v = np.array(value, dtype=np.float64).reshape(3).copy()
    return v


def _color3(value):
    return np.array(value, dtype=np.float64).reshape(3).copy()


def _unit_quat(value):
    return quat.normalize(np.array(value, dtype=np.float64).reshape(4))


def _unit_dir(value):
    v = np.array(value, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise InvalidDirection("direction has (near-)zero length")
    return v / n


class KeyframeTrack:
    """Sorted (frame, value) keys for one property of one asset.

    Vectors and scalars interpolate linearly, quaternions by slerp along
    the shorter arc.  Queries outside the keyed range clamp to the nearest
    end key.
    """

    def __init__(self, kind):
        if kind not in ("scalar", "vector", "quaternion"):
            raise ValueError(f"unknown track kind {kind!r}")
        self.kind = kind
        self.frames = []
        self.values = []

    def insert(self, frame, value):
        frame = int(frame)
        i = int(np.searchsorted(self.frames, frame))
        if i < len(self.frames) and self.frames[i] == frame:
            self.values[i] = value
        else:
            self.frames.insert(i, frame)
            self.values.insert(i, value)

    def interpolate(self, frame):
        if not self.frames:
            raise EmptyTrack("track has no keys")
        frames = self.frames
        if frame <= frames[0]:
            return _copy_value(self.values[0])
        if frame >= frames[-1]:
            return _copy_value(self.values[-1])
        i = int(np.searchsorted(frames, frame, side="right")) - 1
        f0, f1 = frames[i], frames[i + 1]
        if frame == f0:
            return _copy_value(self.values[i])
        t = (frame - f0) / (f1 - f0)
        a, b = self.values[i], self.values[i + 1]
        if self.kind == "quaternion":
            return quat.slerp(a, b, t)
        if self.kind == "scalar":
            return a + t * (b - a)
        return np.asarray(a) + t * (np.asarray(b) - np.asarray(a))


def _copy_value(v):
    return v.copy() if isinstance(v, np.ndarray) else v


class SceneAsset:
    """Base for everything placeable in a scene.

    Subclasses list observed property names in _OBSERVED with a coercion
    function each; assignments to those run the coercion and notify the
    views of every owning scene.  An asset may belong to several scenes.
    """

    _OBSERVED = {}

    def __init__(self, uid, asset_ref=""):
        # bypass __setattr__ for bookkeeping fields
        object.__setattr__(self, "scenes", [])
        object.__setattr__(self, "tracks", {})
        self.uid = str(uid)
        self.asset_ref = asset_ref

    def __setattr__(self, name, value):
        coerce = self._OBSERVED.get(name)
        if coerce is not None:
            value = coerce(value)
        object.__setattr__(self, name, value)
        if coerce is not None:
            for scene in self.scenes:
                scene._notify_update(self, name, value)

    def keyframe_insert(self, name, frame, value):
        if name not in self._OBSERVED:
            raise UnknownProperty(f"{type(self).__name__} has no animatable property {name!r}")
        value = self._OBSERVED[name](value)
        track = self.tracks.get(name)
        if track is None:
            if name == "quaternion":
                kind = "quaternion"
            elif np.ndim(value) == 0:
                kind = "scalar"
            else:
                kind = "vector"
            track = self.tracks[name] = KeyframeTrack(kind)
        track.insert(frame, value)

    def state_at(self, name, frame):
        """Keyframed value at frame, or the current static value if unkeyed."""
        track = self.tracks.get(name)
        if track is not None and track.frames:
            return track.interpolate(frame)
        return _copy_value(getattr(self, name))


class Material:
    """Lambertian surface: flat albedo or a texture image.

    texture is a (H, W) grayscale or (H, W, 3) float array in [0, 1];
    when set it overrides albedo.  texture_ref is a free-form id recorded
    in metadata for provenance.
    """

    def __init__(self, albedo=(0.8, 0.8, 0.8), texture=None, texture_ref=""):
        self.albedo = _color3(albedo)
        self.texture = None if texture is None else np.asarray(texture, dtype=np.float64)
        self.texture_ref = texture_ref


class RigidObject(SceneAsset):
    """A simulated, renderable body with a triangle mesh and a convex collision shape."""

    _OBSERVED = {
        "position": _vec3,
        "quaternion": _unit_quat,
        "velocity": _vec3,
        "angular_velocity": _vec3,
        "scale": float,
        "mass": float,
        "friction": float,
        "restitution": float,
    }

    def __init__(
        self,
        uid,
        mesh=None,
        collision_shape=None,
        position=(0.0, 0.0, 0.0),
        quaternion=(1.0, 0.0, 0.0, 0.0),
        velocity=(0.0, 0.0, 0.0),
        angular_velocity=(0.0, 0.0, 0.0),
        scale=1.0,
        mass=1.0,
        friction=0.5,
        restitution=0.5,
        is_static=False,
        material=None,
        asset_ref="",
    ):
        super().__init__(uid, asset_ref)
        self.mesh = mesh
        self.collision_shape = collision_shape
        self.position = position
        self.quaternion = quaternion
        self.velocity = velocity
        self.angular_velocity = angular_velocity
        self.scale = scale
        self.mass = mass
        self.friction = friction
        self.restitution = restitution
        self.is_static = bool(is_static)
        self.material = material if material is not None else Material()
        self.segmentation_id = 0  # assigned by Scene.add_asset


class PointLight(SceneAsset):
    """Omnidirectional emitter with inverse-square falloff; color carries intensity."""

    _OBSERVED = {"position": _vec3, "color": _color3}

    def __init__(self, uid, position=(0.0, 0.0, 5.0), color=(50.0, 50.0, 50.0)):
        super().__init__(uid)
        self.position = position
        self.color = color


class DirectionalLight(SceneAsset):
    """Parallel emitter; direction points from the light toward the scene."""

    _OBSERVED = {"direction": _unit_dir, "color": _color3}

    def __init__(self, uid, direction=(0.0, 0.0, -1.0), color=(1.0, 1.0, 1.0)):
        super().__init__(uid)
        self.direction = direction
        self.color = color


class PerspectiveCamera(SceneAsset):
    """Pinhole camera looking down its local -Z with +Y up in the image plane."""

    _OBSERVED = {
        "position": _vec3,
        "quaternion": _unit_quat,
        "focal_length": float,
        "sensor_width": float,
        "near_clip": float,
        "far_clip": float,
    }

    def __init__(
        self,
        uid="camera",
        position=(0.0, 0.0, 0.0),
        quaternion=(1.0, 0.0, 0.0, 0.0),
        focal_length=50.0,
        sensor_width=36.0,
        near_clip=0.1,
        far_clip=500.0,
    ):
        super().__init__(uid)
        self.position = position
        self.quaternion = quaternion
        self.focal_length = focal_length
        self.sensor_width = sensor_width
        self.near_clip = near_clip
        self.far_clip = far_clip


class Scene:
    """Container tying assets, camera, timing, and global render settings together.

    frame_start..frame_end are inclusive frame indices at frame_rate fps;
    the simulator runs at step_rate Hz, which must be a positive integer
    multiple of frame_rate so frames land exactly on substeps.
    """

    def __init__(
        self,
        resolution=(256, 256),
        frame_start=0,
        frame_end=23,
        frame_rate=12,
        step_rate=240,
        gravity=(0.0, 0.0, -9.81),
        ambient_light=(0.05, 0.05, 0.05),
        background_color=(0.0, 0.0, 0.0),
    ):
        frame_rate = int(frame_rate)
        step_rate = int(step_rate)
        if frame_rate <= 0 or step_rate <= 0 or step_rate % frame_rate != 0:
            raise InvalidRates(
                f"step_rate ({step_rate}) must be a positive integer multiple of "
                f"frame_rate ({frame_rate})"
            )
        if frame_end < frame_start:
            raise ValueError("frame_end before frame_start")
        self.resolution = (int(resolution[0]), int(resolution[1]))
        self.frame_start = int(frame_start)
        self.frame_end = int(frame_end)
        self.frame_rate = frame_rate
        self.step_rate = step_rate
        self.gravity = _vec3(gravity)
        self.ambient_light = _color3(ambient_light)
        self.background_color = _color3(background_color)
        self.assets = []
        self._by_uid = {}
        self._camera = None
        self._views = []
        self._next_segmentation_id = 1
        self.master_rng_state = 0
        self.info = {}

    @property
    def camera(self):
        return self._camera

    @camera.setter
    def camera(self, cam):
        self._camera = cam
        if cam is not None and self not in cam.scenes:
            cam.scenes.append(self)

    @property
    def frames(self):
        return range(self.frame_start, self.frame_end + 1)

    def add_asset(self, asset):
        if asset.uid in self._by_uid:
            raise DuplicateAsset(f"scene already contains uid {asset.uid!r}")
        self.assets.append(asset)
        self._by_uid[asset.uid] = asset
        if self not in asset.scenes:
            asset.scenes.append(self)
        if isinstance(asset, RigidObject):
            asset.segmentation_id = self._next_segmentation_id
            self._next_segmentation_id += 1
        for view in self._views:
            view.add_asset(asset)
        return asset

    def __getitem__(self, uid):
        return self._by_uid[uid]

    def __contains__(self, uid):
        return uid in self._by_uid

    @property
    def rigid_objects(self):
        return [a for a in self.assets if isinstance(a, RigidObject)]

    @property
    def lights(self):
        return [a for a in self.assets if isinstance(a, (PointLight, DirectionalLight))]

    def attach_view(self, view):
        """Register a view and replay the current asset list into it."""
        self._views.append(view)
        for asset in self.assets:
            view.add_asset(asset)

    def detach_view(self, view):
        self._views.remove(view)

    def _notify_update(self, asset, name, value):
        for view in self._views:
            view.update_asset(asset, name, value)
