"""Convex collision shapes for the narrowphase.

Three kinds: implicit sphere, implicit box, and convex vertex hull.  All
are centered in the body's local frame and scaled uniformly by the body's
scale at query time.  make_collision_shape picks the analytic solid when
the mesh came from make_primitive, otherwise falls back to the hull of
the mesh vertices (single hull; no convex decomposition of concave
geometry, a torus collides as its convex hull).
"""

import numpy as np

from .mesh import convex_hull

SPHERE, BOX, HULL = 0, 1, 2

_KIND_NAMES = {SPHERE: "sphere", BOX: "box", HULL: "hull"}


class CollisionShape:
    def __init__(self, kind, params, vertices=None):
        self.kind = kind
        self.params = np.asarray(params, dtype=np.float64).reshape(3)
        self.vertices = (
            np.zeros((0, 3)) if vertices is None else np.asarray(vertices, dtype=np.float64)
        )

    @classmethod
    def sphere(cls, radius):
        return cls(SPHERE, (radius, 0.0, 0.0))

    @classmethod
    def box(cls, half_extents):
        return cls(BOX, half_extents)

    @classmethod
    def hull(cls, vertices):
        return cls(HULL, (0.0, 0.0, 0.0), vertices)

    @property
    def kind_name(self):
        return _KIND_NAMES[self.kind]

    def local_bounds(self):
        if self.kind == SPHERE:
            r = self.params[0]
            return np.full(3, -r), np.full(3, r)
        if self.kind == BOX:
            return -self.params.copy(), self.params.copy()
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def __repr__(self):
        return f"CollisionShape({self.kind_name})"


def make_collision_shape(mesh):
    """Shape for a mesh: exact solid for primitives, vertex hull otherwise."""
    src = mesh.source
    if src is not None:
        kind, size = src
        if kind == "sphere":
            return CollisionShape.sphere(size)
        if kind == "cube":
            h = size / 2.0
            return CollisionShape.box((h, h, h))
        if kind == "box":
            return CollisionShape.box(size)
    hull = convex_hull(mesh.vertices)
    return CollisionShape.hull(hull.vertices)
