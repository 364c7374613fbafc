"""Ground-truth point tracks sampled from rendered scenes.

A track starts at a visible pixel (the query), takes that pixel's exact
surface point in object coordinates, rigidly transports it through every
frame with the instance poses, and projects it with each frame's camera.
Visibility is decided per frame by a depth re-test: the point is visible
iff it lands inside the image in front of the camera and the rendered
depth at that pixel matches the point's camera distance within a
relative tolerance (occluders make the rendered depth smaller).
"""

from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import NoQueryCandidates
from .rng import Rng

DEPTH_TOLERANCE = 0.01  # relative; robust to f32 depth quantization
DEFAULT_QUERIES = 256
DEFAULT_CAP = 0.002  # per-object cap as a fraction of its visible pixels


@dataclass
class PointTrack:
    query: tuple  # (x, y, frame) in pixels / absolute frame index
    positions: np.ndarray  # (F, 2) pixels, always finite
    visibility: np.ndarray  # (F,) uint8 in {0, 1}
    instance: str  # uid
    local_point: np.ndarray  # (3,) object frame, unscaled


def _group_pools(bundles):
    """instance index -> (F_ord, row, col) candidate array, frame-major."""
    pools = {}
    for ordinal, b in enumerate(bundles):
        inst = b.aux_instance
        for idx in np.unique(inst):
            if idx < 0:
                continue
            rows, cols = np.nonzero(inst == idx)
            entry = np.column_stack(
                [np.full(rows.shape, ordinal, dtype=np.int64), rows, cols]
            )
            pools.setdefault(int(idx), []).append(entry)
    return {idx: np.concatenate(parts) for idx, parts in sorted(pools.items())}


def _draw(pool, taken, rng):
    """One partial Fisher-Yates step: swap a random untaken entry forward."""
    j = taken + rng.randint(len(pool) - taken)
    pool[[taken, j]] = pool[[j, taken]]
    return pool[taken]


def extract_point_tracks(
    scene,
    bundles,
    num_queries=DEFAULT_QUERIES,
    per_object_cap=DEFAULT_CAP,
    rng=None,
):
    """Sample query points and trace them through all frames -> [PointTrack].

    Queries are balanced across the instances present in the rendered
    frames (round-robin in segmentation order), each instance capped at
    ceil(per_object_cap * its visible pixel count).  Raises
    NoQueryCandidates when nothing is visible in any frame.
    """
    if rng is None:
        rng = Rng(scene.master_rng_state)
    pools = _group_pools(bundles)
    if not pools:
        raise NoQueryCandidates("no visible surface pixels in any frame")

    caps = {
        idx: min(len(pool), int(np.ceil(per_object_cap * len(pool))))
        for idx, pool in pools.items()
    }
    taken = dict.fromkeys(pools, 0)

    # round-robin across instances so counts stay balanced under the caps
    queries = []
    progressed = True
    while len(queries) < num_queries and progressed:
        progressed = False
        for idx in pools:
            if len(queries) >= num_queries:
                break
            if taken[idx] >= caps[idx]:
                continue
            entry = _draw(pools[idx], taken[idx], rng)
            taken[idx] += 1
            queries.append((idx, int(entry[0]), int(entry[1]), int(entry[2])))
            progressed = True

    return [_trace(scene, bundles, q) for q in queries]


def _project(state_pos, state_rot, fx, cx, cy, width, height, near, world):
    local = quat.rotate_inverse(state_rot, world - state_pos)
    z = -local[2]
    in_front = z >= near
    zq = max(z, near)
    x = fx * local[0] / zq + cx
    y = cy - fx * local[1] / zq
    x = min(max(x, -float(width)), 2.0 * width)
    y = min(max(y, -float(height)), 2.0 * height)
    return x, y, in_front, np.linalg.norm(world - state_pos)


def _trace(scene, bundles, query):
    inst_idx, t_ord, row, col = query
    bundle = bundles[t_ord]
    local = bundle.aux_local[row, col].copy()
    uid = bundle.instance_uids[inst_idx]
    obj = scene[uid]
    cam = scene.camera
    width, height = scene.resolution
    fx = width * cam.focal_length / cam.sensor_width
    cx, cy = width / 2.0, height / 2.0
    frames = list(scene.frames)

    positions = np.zeros((len(frames), 2))
    visibility = np.zeros(len(frames), dtype=np.uint8)
    for i, f in enumerate(frames):
        world = quat.rotate(
            obj.state_at("quaternion", f), obj.scale * local
        ) + obj.state_at("position", f)
        x, y, in_front, dist = _project(
            cam.state_at("position", f),
            cam.state_at("quaternion", f),
            fx, cx, cy, width, height, cam.near_clip, world,
        )
        positions[i] = (x, y)
        if not in_front or not (0.0 <= x < width and 0.0 <= y < height):
            continue
        depth = float(bundles[i].depth[int(y), int(x), 0])
        if np.isfinite(depth) and abs(dist - depth) <= DEPTH_TOLERANCE * dist:
            visibility[i] = 1

    return PointTrack(
        query=(col + 0.5, row + 0.5, frames[t_ord]),
        positions=positions,
        visibility=visibility,
        instance=uid,
        local_point=local,
    )
