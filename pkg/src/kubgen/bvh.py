"""Bounding-volume hierarchy over one triangle mesh.

Binary tree, median split on the widest axis of the centroid bounds,
leaves of up to 4 triangles, stored as flat arrays so traversal runs
under the backend jit and so several meshes can be concatenated into one
scene-level array set (indices are local to the mesh; the renderer adds
offsets when it concatenates).

The triangle test is the watertight method of Woop et al.: shear the
triangle into ray space and evaluate 2D edge functions, accepting only
if all three carry the same sign.  Edges and vertices shared between
triangles then never let a ray slip between them.  Ties on t are broken
toward the lower triangle index, which makes the result independent of
traversal order and equal to a brute-force scan.
"""

import numpy as np

from .backend import jit
from .errors import EmptyMesh

LEAF_SIZE = 4


class Bvh:
    """Flat-array hierarchy; node 0 is the root.

    left/right are child indices for internal nodes and -1 for leaves;
    start/count give a leaf's triangle range inside order (triangle ids
    grouped per leaf).
    """

    def __init__(self, bounds_min, bounds_max, left, right, start, count, order):
        self.bounds_min = bounds_min
        self.bounds_max = bounds_max
        self.left = left
        self.right = right
        self.start = start
        self.count = count
        self.order = order

    @property
    def node_count(self):
        return len(self.left)

    def intersect(self, verts, tris, origin, direction, tmin=0.0, tmax=np.inf):
        """Nearest hit -> (tri index, t, u, v, triangle_tests); tri -1 on miss.

        u, v are the barycentric weights of the triangle's second and
        third vertex.  triangle_tests counts watertight tests run, the
        instrumentation hook for pruning checks.
        """
        o = np.asarray(origin, dtype=np.float64)
        d = np.asarray(direction, dtype=np.float64)
        stack = np.empty(128, dtype=np.int64)
        tri, t, u, v, tests = traverse_kernel(
            verts, tris,
            self.bounds_min, self.bounds_max, self.left, self.right,
            self.start, self.count, self.order, 0,
            o[0], o[1], o[2], d[0], d[1], d[2], tmin, tmax, stack,
        )
        return int(tri), float(t), float(u), float(v), int(tests)


def build_bvh(mesh):
    """Hierarchy for the mesh; intersections match a brute-force scan exactly."""
    tris = np.asarray(mesh.faces, dtype=np.int64)
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    if len(tris) == 0:
        raise EmptyMesh("cannot build a hierarchy over zero triangles")

    tri_min = verts[tris].min(axis=1)
    tri_max = verts[tris].max(axis=1)
    centroid = (tri_min + tri_max) * 0.5

    bounds_min = []
    bounds_max = []
    left = []
    right = []
    start = []
    count = []
    order = []

    def add_node(ids):
        idx = len(left)
        bounds_min.append(tri_min[ids].min(axis=0))
        bounds_max.append(tri_max[ids].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)

        c = centroid[ids]
        spread = c.max(axis=0) - c.min(axis=0)
        axis = int(np.argmax(spread))
        if len(ids) <= LEAF_SIZE or spread[axis] == 0.0:
            start[idx] = len(order)
            count[idx] = len(ids)
            order.extend(ids.tolist())
            return idx
        ids = ids[np.argsort(c[:, axis], kind="stable")]
        half = len(ids) // 2
        left[idx] = add_node(ids[:half])
        right[idx] = add_node(ids[half:])
        return idx

    add_node(np.arange(len(tris), dtype=np.int64))
    return Bvh(
        np.array(bounds_min),
        np.array(bounds_max),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64),
        np.array(count, dtype=np.int64),
        np.array(order, dtype=np.int64),
    )


@jit
def ray_shear(dx, dy, dz):
    """Woop ray constants: permutation (kx, ky, kz) and shear (sx, sy, sz)."""
    ax, ay, az = abs(dx), abs(dy), abs(dz)
    if az >= ax and az >= ay:
        kz = 2
    elif ay >= ax:
        kz = 1
    else:
        kz = 0
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0
    d = (dx, dy, dz)
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sz = 1.0 / d[kz]
    sx = d[kx] * sz
    sy = d[ky] * sz
    return kx, ky, kz, sx, sy, sz


@jit
def tri_hit(verts, tris, tri, ox, oy, oz, kx, ky, kz, sx, sy, sz, tmin, tmax):
    """Watertight test of one triangle -> (hit, t, u, v).

    u is the barycentric weight of vertex tris[tri,1], v of tris[tri,2].
    """
    i0, i1, i2 = tris[tri, 0], tris[tri, 1], tris[tri, 2]
    ax_, ay_, az_ = verts[i0, 0] - ox, verts[i0, 1] - oy, verts[i0, 2] - oz
    bx_, by_, bz_ = verts[i1, 0] - ox, verts[i1, 1] - oy, verts[i1, 2] - oz
    cx_, cy_, cz_ = verts[i2, 0] - ox, verts[i2, 1] - oy, verts[i2, 2] - oz

    a = (ax_, ay_, az_)
    b = (bx_, by_, bz_)
    c = (cx_, cy_, cz_)
    akz, bkz, ckz = a[kz], b[kz], c[kz]
    axs = a[kx] - sx * akz
    ays = a[ky] - sy * akz
    bxs = b[kx] - sx * bkz
    bys = b[ky] - sy * bkz
    cxs = c[kx] - sx * ckz
    cys = c[ky] - sy * ckz

    u = cxs * bys - cys * bxs
    v = axs * cys - ays * cxs
    w = bxs * ays - bys * axs

    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return False, 0.0, 0.0, 0.0
    det = u + v + w
    if det == 0.0:
        return False, 0.0, 0.0, 0.0
    t_scaled = u * sz * akz + v * sz * bkz + w * sz * ckz
    if det > 0.0:
        if t_scaled < tmin * det or t_scaled > tmax * det:
            return False, 0.0, 0.0, 0.0
    else:
        if t_scaled > tmin * det or t_scaled < tmax * det:
            return False, 0.0, 0.0, 0.0
    inv = 1.0 / det
    return True, t_scaled * inv, v * inv, w * inv


@jit
def _aabb_hit(bminx, bminy, bminz, bmaxx, bmaxy, bmaxz,
              ox, oy, oz, dx, dy, dz, tmin, tmax):
    if dx != 0.0:
        inv = 1.0 / dx
        t1 = (bminx - ox) * inv
        t2 = (bmaxx - ox) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
    elif ox < bminx or ox > bmaxx:
        return False
    if dy != 0.0:
        inv = 1.0 / dy
        t1 = (bminy - oy) * inv
        t2 = (bmaxy - oy) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
    elif oy < bminy or oy > bmaxy:
        return False
    if dz != 0.0:
        inv = 1.0 / dz
        t1 = (bminz - oz) * inv
        t2 = (bmaxz - oz) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
    elif oz < bminz or oz > bmaxz:
        return False
    return tmin <= tmax


@jit
def traverse_kernel(verts, tris, bmin, bmax, left, right, start, count, order,
                    root, ox, oy, oz, dx, dy, dz, tmin, tmax, stack):
    """Nearest-hit traversal -> (tri, t, u, v, triangle_tests); tri -1 on miss.

    Ties on t go to the lower triangle index so the answer matches a
    brute-force scan regardless of visit order.  stack is caller-provided
    scratch so the renderer can reuse one allocation across rays.
    """
    best_tri = -1
    best_t = tmax
    best_u = 0.0
    best_v = 0.0
    tests = 0

    kx, ky, kz, sx, sy, sz = ray_shear(dx, dy, dz)

    if not _aabb_hit(bmin[root, 0], bmin[root, 1], bmin[root, 2],
                     bmax[root, 0], bmax[root, 1], bmax[root, 2],
                     ox, oy, oz, dx, dy, dz, tmin, best_t):
        return best_tri, best_t, best_u, best_v, tests

    top = 0
    stack[top] = root
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _aabb_hit(bmin[node, 0], bmin[node, 1], bmin[node, 2],
                         bmax[node, 0], bmax[node, 1], bmax[node, 2],
                         ox, oy, oz, dx, dy, dz, tmin, best_t):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                tri = order[k]
                tests += 1
                hit, t, u, v = tri_hit(
                    verts, tris, tri, ox, oy, oz, kx, ky, kz, sx, sy, sz, tmin, best_t
                )
                if hit and (t < best_t or (t == best_t and (best_tri < 0 or tri < best_tri))):
                    best_tri = tri
                    best_t = t
                    best_u = u
                    best_v = v
        else:
            stack[top] = right[node]
            top += 1
            stack[top] = left[node]
            top += 1
    if best_tri < 0:
        best_t = np.inf
    return best_tri, best_t, best_u, best_v, tests


@jit
def occluded_kernel(verts, tris, bmin, bmax, left, right, start, count, order,
                    root, ox, oy, oz, dx, dy, dz, tmin, tmax, stack):
    """Any-hit traversal: True as soon as one triangle hits in [tmin, tmax]."""
    kx, ky, kz, sx, sy, sz = ray_shear(dx, dy, dz)
    if not _aabb_hit(bmin[root, 0], bmin[root, 1], bmin[root, 2],
                     bmax[root, 0], bmax[root, 1], bmax[root, 2],
                     ox, oy, oz, dx, dy, dz, tmin, tmax):
        return False
    top = 0
    stack[top] = root
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _aabb_hit(bmin[node, 0], bmin[node, 1], bmin[node, 2],
                         bmax[node, 0], bmax[node, 1], bmax[node, 2],
                         ox, oy, oz, dx, dy, dz, tmin, tmax):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                hit, t, u, v = tri_hit(
                    verts, tris, order[k], ox, oy, oz, kx, ky, kz, sx, sy, sz, tmin, tmax
                )
                if hit:
                    return True
        else:
            stack[top] = right[node]
            top += 1
            stack[top] = left[node]
            top += 1
    return False


def brute_force_intersect(verts, tris, origin, direction, tmin=0.0, tmax=np.inf):
    """Reference all-triangle scan with the same tie rule as the hierarchy."""
    verts = np.asarray(verts, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.int64)
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    kx, ky, kz, sx, sy, sz = ray_shear(d[0], d[1], d[2])
    best = (-1, np.inf, 0.0, 0.0)
    for tri in range(len(tris)):
        hit, t, u, v = tri_hit(
            verts, tris, tri, o[0], o[1], o[2], kx, ky, kz, sx, sy, sz, tmin, min(best[1], tmax),
        )
        if hit and (t < best[1] or (t == best[1] and best[0] < 0)):
            best = (tri, t, u, v)
    return best
