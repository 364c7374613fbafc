"""On-disk scene records: binary raster layers plus JSON documents.

A record is a directory: metadata.json (scene settings, per-frame camera,
per-instance attributes), events.json (contact events), optional
tracks.json (point tracks), seven .kbr rasters per frame, and an 8-bit
gamma preview .ppm per frame for eyeballing.

Raster layout ("KBRR"): magic 4 bytes, u32 version = 1, u32 width,
u32 height, u32 channels, u8 dtype code (0 f32, 1 u32, 2 u16, 3 u8),
3 zero bytes, then the row-major channel-interleaved little-endian
payload.  Everything round-trips bitwise, including NaN and infinity.

JSON files are UTF-8 with sorted keys and a trailing newline so byte
hashes are stable across writes.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import intrinsics
from .errors import FormatError, IncompleteRecord, InconsistentRecord
from .scene import RigidObject

MAGIC = b"KBRR"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIB3x")

_CODE_TO_DTYPE = {
    0: np.dtype("<f4"),
    1: np.dtype("<u4"),
    2: np.dtype("<u2"),
    3: np.dtype("<u1"),
}
_KIND_TO_CODE = {("f", 4): 0, ("u", 4): 1, ("u", 2): 2, ("u", 1): 3}

# layer name -> (channels, dtype code); file names are {layer}_{frame:05d}.kbr
LAYERS = {
    "rgba": (4, 0),
    "depth": (1, 0),
    "segmentation": (1, 1),
    "normal": (3, 0),
    "object_coordinates": (3, 0),
    "forward_flow": (2, 0),
    "backward_flow": (2, 0),
}

PREVIEW_GAMMA = 2.2


def write_raster(path, array):
    """Serialize a (H, W) or (H, W, C) array; dtype taken from the array."""
    a = np.asarray(array)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise FormatError(f"raster must be 2- or 3-dimensional, got shape {a.shape}")
    code = _KIND_TO_CODE.get((a.dtype.kind, a.dtype.itemsize))
    if code is None:
        raise FormatError(f"unsupported raster dtype {a.dtype}")
    h, w, c = a.shape
    if max(h, w, c) >= 2**32:
        raise FormatError("raster dimensions exceed u32")
    payload = np.ascontiguousarray(a, dtype=_CODE_TO_DTYPE[code]).tobytes()
    Path(path).write_bytes(_HEADER.pack(MAGIC, VERSION, w, h, c, code) + payload)


def _parse_header(path, blob_len, header_bytes):
    if blob_len < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({blob_len} bytes)")
    magic, version, w, h, c, code = _HEADER.unpack_from(header_bytes)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    dtype = _CODE_TO_DTYPE.get(code)
    if dtype is None:
        raise FormatError(f"{path}: unknown dtype code {code}")
    expected = w * h * c * dtype.itemsize
    if blob_len - _HEADER.size != expected:
        raise FormatError(
            f"{path}: payload is {blob_len - _HEADER.size} bytes, "
            f"header implies {expected}"
        )
    return w, h, c, code


def raster_info(path):
    """Validate a raster's header and size without loading the payload."""
    p = Path(path)
    size = p.stat().st_size
    with open(p, "rb") as fh:
        header = fh.read(_HEADER.size)
    return _parse_header(p, size, header)


def read_raster(path):
    """Read a raster file back as an (H, W, C) array; bitwise inverse of write."""
    blob = Path(path).read_bytes()
    w, h, c, code = _parse_header(path, len(blob), blob[:_HEADER.size])
    return np.frombuffer(blob, dtype=_CODE_TO_DTYPE[code], offset=_HEADER.size).reshape(
        h, w, c
    ).copy()


def compute_bbox_2d(segmentation, segmentation_id):
    """Tight normalized [ymin, xmin, ymax, xmax] of an id, or None if absent.

    Max edges are exclusive pixel edges: row r spans [r/H, (r+1)/H), so a
    full-frame mask is exactly [0, 0, 1, 1].
    """
    seg = np.asarray(segmentation)
    if seg.ndim == 3:
        seg = seg[:, :, 0]
    rows, cols = np.nonzero(seg == segmentation_id)
    if rows.size == 0:
        return None
    h, w = seg.shape
    return [
        int(rows.min()) / h,
        int(cols.min()) / w,
        (int(rows.max()) + 1) / h,
        (int(cols.max()) + 1) / w,
    ]


def _plain(value):
    """Recursively convert numpy containers/scalars for the json encoder."""
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def dump_json(path, value):
    """Write JSON with sorted keys, 2-space indent, trailing newline."""
    text = json.dumps(_plain(value), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_preview(path, rgba):
    """8-bit binary pixmap (P6) of the color pass, gamma-encoded."""
    rgb = np.clip(np.asarray(rgba, dtype=np.float64)[:, :, :3], 0.0, 1.0)
    data = np.rint(rgb ** (1.0 / PREVIEW_GAMMA) * 255.0).astype(np.uint8)
    h, w = data.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + data.tobytes())


def _event_doc(ev):
    return {
        "body_a": ev.body_a,
        "body_b": ev.body_b,
        "contact_position": _plain(np.asarray(ev.contact_position)),
        "contact_normal": _plain(np.asarray(ev.contact_normal)),
        "impulse": float(ev.impulse),
        "simulation_time": float(ev.simulation_time),
        "frame": int(ev.frame),
    }


def _track_doc(tr):
    return {
        "query": [float(tr.query[0]), float(tr.query[1]), int(tr.query[2])],
        "positions": _plain(np.asarray(tr.positions)),
        "visibility": [int(v) for v in tr.visibility],
        "instance": tr.instance,
        "local_point": _plain(np.asarray(tr.local_point)),
    }


def _metadata_doc(scene, bundles):
    cam = scene.camera
    k = intrinsics(cam, scene.resolution)
    frames = list(scene.frames)

    camera_frames = []
    for f in frames:
        camera_frames.append(
            {
                "position": _plain(cam.state_at("position", f)),
                "quaternion": _plain(cam.state_at("quaternion", f)),
                "K": _plain(k),
            }
        )

    instances = []
    for obj in scene.rigid_objects:
        per_frame = []
        for f, bundle in zip(frames, bundles):
            seg = bundle.segmentation[:, :, 0]
            visible = int(np.count_nonzero(seg == obj.segmentation_id))
            per_frame.append(
                {
                    "position": _plain(obj.state_at("position", f)),
                    "quaternion": _plain(obj.state_at("quaternion", f)),
                    "velocity": _plain(obj.state_at("velocity", f)),
                    "angular_velocity": _plain(obj.state_at("angular_velocity", f)),
                    "bbox_2d": compute_bbox_2d(seg, obj.segmentation_id),
                    "visible_pixels": visible,
                }
            )
        bbox_3d = None
        if obj.mesh is not None and len(obj.mesh.vertices):
            lo, hi = obj.mesh.bounds
            bbox_3d = [_plain(lo), _plain(hi)]
        instances.append(
            {
                "uid": obj.uid,
                "asset_ref": obj.asset_ref,
                "albedo": _plain(obj.material.albedo),
                "mass": float(obj.mass),
                "friction": float(obj.friction),
                "restitution": float(obj.restitution),
                "scale": float(obj.scale),
                "is_static": obj.is_static,
                "segmentation_id": int(obj.segmentation_id),
                "bbox_3d": bbox_3d,
                "frames": per_frame,
            }
        )

    return {
        "scene": {
            "resolution": list(scene.resolution),
            "frame_start": scene.frame_start,
            "frame_end": scene.frame_end,
            "frame_rate": scene.frame_rate,
            "step_rate": scene.step_rate,
            "gravity": _plain(scene.gravity),
            "ambient_light": _plain(scene.ambient_light),
            "background_color": _plain(scene.background_color),
            "seed": int(scene.master_rng_state),
            "info": _plain(scene.info),
        },
        "camera": {
            "focal_length": float(cam.focal_length),
            "sensor_width": float(cam.sensor_width),
            "near_clip": float(cam.near_clip),
            "far_clip": float(cam.far_clip),
            "frames": camera_frames,
        },
        "instances": instances,
        "flow": {
            "clamped_forward": [b.flow_clamped_forward for b in bundles],
            "clamped_backward": [b.flow_clamped_backward for b in bundles],
            "backward_zero_filled": [b.backward_zero_filled for b in bundles],
        },
    }


def write_scene_record(out_dir, scene, bundles, events, tracks=None):
    """Write a full record directory; returns its Path.

    bundles must cover scene.frames in order.  Raster files are indexed
    by ordinal within the record (00000 = frame_start).
    """
    frames = list(scene.frames)
    if len(bundles) != len(frames):
        raise InconsistentRecord(
            f"{len(bundles)} bundles for {len(frames)} frames"
        )
    width, height = scene.resolution
    for i, b in enumerate(bundles):
        if b.rgba.shape[:2] != (height, width):
            raise InconsistentRecord(
                f"bundle {i} is {b.rgba.shape[1]}x{b.rgba.shape[0]}, "
                f"scene wants {width}x{height}"
            )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, b in enumerate(bundles):
        for layer in LAYERS:
            write_raster(out / f"{layer}_{i:05d}.kbr", getattr(b, layer))
        write_preview(out / f"preview_{i:05d}.ppm", b.rgba)

    dump_json(out / "metadata.json", _metadata_doc(scene, bundles))
    dump_json(out / "events.json", [_event_doc(e) for e in events])
    if tracks is not None:
        dump_json(out / "tracks.json", [_track_doc(t) for t in tracks])
    return out


@dataclass
class SceneRecord:
    """A validated record directory; raster layers are read on demand."""

    path: Path
    metadata: dict
    events: list
    tracks: list = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_frames(self):
        sc = self.metadata["scene"]
        return sc["frame_end"] - sc["frame_start"] + 1

    @property
    def resolution(self):
        return tuple(self.metadata["scene"]["resolution"])

    def layer(self, name, ordinal):
        if name not in LAYERS:
            raise KeyError(name)
        key = (name, ordinal)
        if key not in self._cache:
            self._cache[key] = read_raster(self.path / f"{name}_{ordinal:05d}.kbr")
        return self._cache[key]


def read_scene_record(record_dir):
    """Open and validate a record directory -> SceneRecord.

    Missing files raise IncompleteRecord; files that disagree with each
    other raise InconsistentRecord.
    """
    path = Path(record_dir)
    if not path.is_dir():
        raise IncompleteRecord(f"{path} is not a directory")
    for required in ("metadata.json", "events.json"):
        if not (path / required).is_file():
            raise IncompleteRecord(f"{path}: missing {required}")

    metadata = load_json(path / "metadata.json")
    events = load_json(path / "events.json")
    tracks_path = path / "tracks.json"
    tracks = load_json(tracks_path) if tracks_path.is_file() else None

    scene_doc = metadata["scene"]
    n_frames = scene_doc["frame_end"] - scene_doc["frame_start"] + 1
    width, height = scene_doc["resolution"]

    if len(metadata["camera"]["frames"]) != n_frames:
        raise InconsistentRecord(
            f"{path}: camera has {len(metadata['camera']['frames'])} frames, "
            f"scene spans {n_frames}"
        )
    for inst in metadata["instances"]:
        if len(inst["frames"]) != n_frames:
            raise InconsistentRecord(
                f"{path}: instance {inst['uid']!r} has {len(inst['frames'])} "
                f"frames, scene spans {n_frames}"
            )

    for i in range(n_frames):
        for layer in LAYERS:
            if not (path / f"{layer}_{i:05d}.kbr").is_file():
                raise IncompleteRecord(f"{path}: missing {layer}_{i:05d}.kbr")

    record = SceneRecord(path=path, metadata=metadata, events=events, tracks=tracks)

    known_ids = {inst["segmentation_id"] for inst in metadata["instances"]}
    for i in range(n_frames):
        for layer, (channels, code) in LAYERS.items():
            name = f"{layer}_{i:05d}.kbr"
            w, h, c, fcode = raster_info(path / name)
            if (w, h, c) != (width, height, channels) or fcode != code:
                raise InconsistentRecord(
                    f"{path}: {name} is {w}x{h}x{c} code {fcode}, expected "
                    f"{width}x{height}x{channels} code {code}"
                )
        seg_ids = set(np.unique(record.layer("segmentation", i)[:, :, 0]).tolist())
        seg_ids.discard(0)
        unknown = seg_ids - known_ids
        if unknown:
            raise InconsistentRecord(
                f"{path}: segmentation ids {sorted(unknown)} absent from metadata"
            )
    return record
