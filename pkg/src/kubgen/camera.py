"""Pinhole projection and ray generation.

Image coordinates are continuous with the origin at the top-left corner:
x right in [0, width], y down in [0, height], so pixel (row i, col j)
covers [j, j+1) x [i, i+1) and has center (j + 0.5, i + 0.5).  The camera
looks along its local -Z with +Y up, hence the sign flip on y.  With unit
focal scaling fx = width * focal_length / sensor_width, fy = fx, and the
principal point at the image center, project(generate_ray(x, y)) returns
exactly (x, y).
"""

from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import BehindCamera


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit length, world frame


def intrinsics(cam, resolution):
    """3x3 K for the given (width, height)."""
    width, height = resolution
    fx = width * cam.focal_length / cam.sensor_width
    return np.array(
        [
            [fx, 0.0, width / 2.0],
            [0.0, fx, height / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )


def project(cam, point, resolution, position=None, quaternion=None):
    """World point -> (x, y, distance); distance is Euclidean from the camera.

    position/quaternion override the camera's current pose (used when
    projecting against a keyframed pose at another frame).  Raises
    BehindCamera unless the point has positive depth along the optical axis.
    """
    pos = cam.position if position is None else position
    rot = cam.quaternion if quaternion is None else quaternion
    k = intrinsics(cam, resolution)
    d = np.asarray(point, dtype=np.float64) - pos
    local = quat.rotate_inverse(rot, d)
    z = -local[2]
    if z <= 0.0:
        raise BehindCamera(f"point depth {z} is not positive")
    x = k[0, 0] * local[0] / z + k[0, 2]
    y = k[1, 2] - k[1, 1] * local[1] / z
    return x, y, float(np.linalg.norm(d))


def generate_ray(cam, x, y, resolution, position=None, quaternion=None):
    """Unit world-space ray through continuous image point (x, y)."""
    pos = cam.position if position is None else position
    rot = cam.quaternion if quaternion is None else quaternion
    k = intrinsics(cam, resolution)
    local = np.array([(x - k[0, 2]) / k[0, 0], (k[1, 2] - y) / k[1, 1], -1.0])
    local /= np.linalg.norm(local)
    return Ray(origin=np.asarray(pos, dtype=np.float64).copy(), direction=quat.rotate(rot, local))


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Orientation quaternion for a camera at eye looking at target.

    Camera -Z points at the target, +Y is the up vector's image-plane
    component.  Degenerate when the view direction is parallel to up.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(forward)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    z_cam = -forward / n
    x_cam = np.cross(np.asarray(up, dtype=np.float64), z_cam)
    nx = np.linalg.norm(x_cam)
    if nx < 1e-12:
        raise ValueError("view direction parallel to up")
    x_cam /= nx
    y_cam = np.cross(z_cam, x_cam)
    return quat.from_matrix(np.column_stack([x_cam, y_cam, z_cam]))
