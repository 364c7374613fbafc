"""Triangle meshes: text IO, primitives, convex hulls, mass properties.

Geometry interchange is a small line-oriented dialect: `v x y z` vertices,
`vt u v` texture coordinates (mapped 1:1 onto vertices by order), and
`f i j k ...` one-based faces, triangulated as a fan when longer than 3.
Anything else (normals, objects, materials) is ignored.  Indices after a
slash in face entries are dropped; only the vertex index is honored.

Meshes are assumed closed and consistently wound counter-clockwise seen
from outside wherever volume or inertia is computed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, EmptyMesh, InvalidWinding, ParseError


class TriangleMesh:
    """Vertices (V,3) float64, faces (T,3) int64, optional per-vertex uv (V,2)."""

    def __init__(self, vertices, faces, uvs=None, source=None):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        self.uvs = None if uvs is None else np.asarray(uvs, dtype=np.float64).reshape(-1, 2)
        # (kind, size) when built by make_primitive; lets collision shapes
        # use the exact analytic solid instead of a mesh hull
        self.source = source

    @property
    def bounds(self):
        """(min, max) corners of the axis-aligned bounding box in local frame."""
        if len(self.vertices) == 0:
            raise EmptyMesh("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def __repr__(self):
        return f"TriangleMesh({len(self.vertices)} verts, {len(self.faces)} tris)"


def load_mesh(text):
    """Parse the geometry dialect into a TriangleMesh.

    Raises ParseError on malformed lines, IndexError when a face references
    a vertex that does not exist, EmptyMesh when no faces result.
    """
    vertices = []
    uvs = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(p) for p in parts[1:]])
            except ValueError as e:
                raise ParseError(f"line {lineno}: {e}") from None
        elif tag == "vt":
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: vt needs 2 coordinates")
            try:
                uvs.append([float(p) for p in parts[1:]])
            except ValueError as e:
                raise ParseError(f"line {lineno}: {e}") from None
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: face needs at least 3 indices")
            idx = []
            for p in parts[1:]:
                head = p.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ParseError(f"line {lineno}: bad face index {p!r}") from None
                if i < 1 or i > len(vertices):
                    raise IndexError(f"line {lineno}: vertex index {i} out of range")
                idx.append(i - 1)
            for k in range(1, len(idx) - 1):  # fan triangulation
                faces.append([idx[0], idx[k], idx[k + 1]])
        # other directives ignored
    if not faces:
        raise EmptyMesh("no faces in mesh text")
    mesh_uvs = None
    if uvs:
        if len(uvs) != len(vertices):
            raise ParseError(f"{len(uvs)} vt lines for {len(vertices)} vertices")
        mesh_uvs = uvs
    return TriangleMesh(vertices, faces, uvs=mesh_uvs)


def dump_mesh(mesh):
    """Inverse of load_mesh; floats via repr so round-trips are exact."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    if mesh.uvs is not None:
        for uv in mesh.uvs:
            lines.append(f"vt {float(uv[0])!r} {float(uv[1])!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# primitives


def _icosahedron():
    p = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return verts, faces


def _icosphere(radius, subdivisions):
    verts, faces = _icosahedron()
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    verts = [v for v in verts]
    cache = {}

    def midpoint(i, j):
        key = (i, j) if i < j else (j, i)
        k = cache.get(key)
        if k is None:
            m = verts[i] + verts[j]
            m /= np.linalg.norm(m)
            verts.append(m)
            k = cache[key] = len(verts) - 1
        return k

    for _ in range(subdivisions):
        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = np.array(new_faces, dtype=np.int64)
    return np.array(verts) * radius, faces


def _cube(size):
    h = size / 2.0
    verts = np.array(
        [
            [-h, -h, -h], [h, -h, -h], [h, h, -h], [-h, h, -h],
            [-h, -h, h], [h, -h, h], [h, h, h], [-h, h, h],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom (-z)
            [4, 5, 6], [4, 6, 7],  # top (+z)
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ],
        dtype=np.int64,
    )
    return verts, faces


def _cylinder(size, segments=32):
    r, h = size, size
    bottom, top = [], []
    for k in range(segments):
        t = 2.0 * math.pi * k / segments
        bottom.append([r * math.cos(t), r * math.sin(t), -h])
        top.append([r * math.cos(t), r * math.sin(t), h])
    verts = bottom + top + [[0.0, 0.0, -h], [0.0, 0.0, h]]
    bc, tc = 2 * segments, 2 * segments + 1
    faces = []
    for k in range(segments):
        k1 = (k + 1) % segments
        b0, b1, t0, t1 = k, k1, segments + k, segments + k1
        faces += [[b0, b1, t1], [b0, t1, t0]]  # side
        faces.append([tc, t0, t1])  # top cap, ccw from +z
        faces.append([bc, b1, b0])  # bottom cap, ccw from -z
    return np.array(verts), np.array(faces, dtype=np.int64)


def _cone(size, segments=32):
    r, h = size, size
    ring = []
    for k in range(segments):
        t = 2.0 * math.pi * k / segments
        ring.append([r * math.cos(t), r * math.sin(t), -h])
    verts = ring + [[0.0, 0.0, h], [0.0, 0.0, -h]]
    apex, bc = segments, segments + 1
    faces = []
    for k in range(segments):
        k1 = (k + 1) % segments
        faces.append([k, k1, apex])
        faces.append([bc, k1, k])
    return np.array(verts), np.array(faces, dtype=np.int64)


def _torus(size, major_segments=32, minor_segments=16):
    major, minor = size, size / 4.0
    verts = []
    for i in range(major_segments):
        t = 2.0 * math.pi * i / major_segments
        for j in range(minor_segments):
            p = 2.0 * math.pi * j / minor_segments
            ring = major + minor * math.cos(p)
            verts.append([ring * math.cos(t), ring * math.sin(t), minor * math.sin(p)])
    faces = []
    for i in range(major_segments):
        i1 = (i + 1) % major_segments
        for j in range(minor_segments):
            j1 = (j + 1) % minor_segments
            a = i * minor_segments + j
            b = i1 * minor_segments + j
            c = i1 * minor_segments + j1
            d = i * minor_segments + j1
            faces += [[a, b, c], [a, c, d]]
    return np.array(verts), np.array(faces, dtype=np.int64)


def _quad(size):
    h = size / 2.0
    verts = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return verts, faces, uvs


PRIMITIVE_KINDS = ("cube", "sphere", "cylinder", "cone", "torus")


def make_primitive(kind, size=1.0):
    """Canonical solids centered at the origin, outward winding.

    cube: edge `size`.  sphere: icosphere radius `size`, 3 subdivisions.
    cylinder: radius `size`, height 2*size, 32 segments.  cone: base radius
    `size`, height 2*size, 32 segments.  torus: major radius `size`, minor
    size/4, 32x16 segments.  quad: flat size x size square in z=0 with uv,
    render-only (zero volume).
    """
    if size <= 0:
        raise ValueError("size must be positive")
    if kind == "cube":
        verts, faces = _cube(size)
        uvs = None
    elif kind == "sphere":
        verts, faces = _icosphere(size, 3)
        uvs = None
    elif kind == "cylinder":
        verts, faces = _cylinder(size)
        uvs = None
    elif kind == "cone":
        verts, faces = _cone(size)
        uvs = None
    elif kind == "torus":
        verts, faces = _torus(size)
        uvs = None
    elif kind == "quad":
        verts, faces, uvs = _quad(size)
    else:
        raise ValueError(f"unknown primitive kind {kind!r}")
    return TriangleMesh(verts, faces, uvs=uvs, source=(kind, float(size)))


def make_box(half_extents):
    """Axis-aligned box mesh with given half extents (floor slabs etc.)."""
    hx, hy, hz = [float(h) for h in half_extents]
    verts, faces = _cube(2.0)
    verts = verts * np.array([hx, hy, hz])
    m = TriangleMesh(verts, faces, source=("box", (hx, hy, hz)))
    return m


# ---------------------------------------------------------------------------
# mass properties


@dataclass
class MassProperties:
    volume: float
    mass: float
    center_of_mass: np.ndarray
    inertia: np.ndarray  # 3x3 about the center of mass

    def scaled_to_mass(self, mass):
        """Same geometry, total mass forced to `mass`."""
        f = mass / self.mass
        return MassProperties(self.volume, mass, self.center_of_mass.copy(), self.inertia * f)


# second moments of the unit tetrahedron (0, e1, e2, e3), times det
_TET_COV = np.full((3, 3), 1.0 / 120.0)
np.fill_diagonal(_TET_COV, 1.0 / 60.0)


def mass_properties(mesh, density=1.0):
    """Volume, mass, center of mass, and inertia about it for a closed mesh.

    Each face spans a signed tetrahedron against the origin; volumes,
    first moments, and covariances are summed with sign, so the mesh may
    be non-convex as long as it is closed and wound outward.  Non-positive
    total volume raises InvalidWinding.
    """
    if len(mesh.faces) == 0:
        raise EmptyMesh("mass properties need triangles")
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    volume = det.sum() / 6.0
    if volume <= 0.0:
        raise InvalidWinding(f"signed volume {volume} is not positive")
    first = (det[:, None] * (a + b + c)).sum(axis=0) / 24.0
    com = first / volume
    cov = np.zeros((3, 3))
    for i in range(len(det)):
        m = np.column_stack([a[i], b[i], c[i]])
        cov += det[i] * (m @ _TET_COV @ m.T)
    mass = density * volume
    inertia_origin = density * (np.trace(cov) * np.eye(3) - cov)
    d = com
    inertia = inertia_origin - mass * ((d @ d) * np.eye(3) - np.outer(d, d))
    return MassProperties(float(volume), float(mass), com, inertia)


# ---------------------------------------------------------------------------
# convex hull (quickhull)


def convex_hull(points):
    """Convex hull of a 3D point cloud as an outward-wound TriangleMesh.

    Quickhull with a visibility tolerance of 1e-10 * scale; inputs with
    fewer than 4 points or all points within 1e-9 of a common plane raise
    DegenerateInput.  Output vertices keep the input's relative order.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n < 4:
        raise DegenerateInput("hull needs at least 4 points")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    scale = float(np.max(hi - lo))
    if scale <= 0.0:
        raise DegenerateInput("all points coincide")
    eps = 1e-10 * scale

    # initial simplex: farthest axis-extreme pair, then max area, then max volume
    extremes = list(np.concatenate([pts.argmin(axis=0), pts.argmax(axis=0)]))
    best, i0, i1 = -1.0, 0, 0
    for i in extremes:
        for j in extremes:
            d = float(np.linalg.norm(pts[i] - pts[j]))
            if d > best:
                best, i0, i1 = d, i, j
    if best < 1e-9:
        raise DegenerateInput("points are coincident")
    ab = pts[i1] - pts[i0]
    areas = np.linalg.norm(np.cross(ab, pts - pts[i0]), axis=1)
    i2 = int(areas.argmax())
    if areas[i2] < 1e-9 * best:
        raise DegenerateInput("points are collinear")
    normal = np.cross(ab, pts[i2] - pts[i0])
    normal /= np.linalg.norm(normal)
    dists = (pts - pts[i0]) @ normal
    i3 = int(np.abs(dists).argmax())
    if abs(dists[i3]) < 1e-9:
        raise DegenerateInput("points are coplanar within 1e-9")
    if dists[i3] > 0:  # keep (i0,i1,i2) as a face seen from outside
        i0, i1 = i1, i0

    faces = []  # [ia, ib, ic, normal, offset, alive]
    edge_map = {}  # sorted vertex pair -> list of face indices

    def add_face(ia, ib, ic):
        nrm = np.cross(pts[ib] - pts[ia], pts[ic] - pts[ia])
        ln = np.linalg.norm(nrm)
        nrm = nrm / ln if ln > 0 else nrm
        faces.append([ia, ib, ic, nrm, float(nrm @ pts[ia]), True])
        fi = len(faces) - 1
        for e in ((ia, ib), (ib, ic), (ic, ia)):
            edge_map.setdefault((min(e), max(e)), []).append(fi)
        return fi

    def drop_face(fi):
        ia, ib, ic = faces[fi][0], faces[fi][1], faces[fi][2]
        faces[fi][5] = False
        for e in ((ia, ib), (ib, ic), (ic, ia)):
            edge_map[(min(e), max(e))].remove(fi)

    for tri in ((i0, i1, i2), (i1, i0, i3), (i2, i1, i3), (i0, i2, i3)):
        add_face(*tri)

    outside = [[] for _ in range(4)]
    for p in range(n):
        if p in (i0, i1, i2, i3):
            continue
        best_d, best_f = eps, -1
        for fi in range(4):
            d = float(faces[fi][3] @ pts[p]) - faces[fi][4]
            if d > best_d:
                best_d, best_f = d, fi
        if best_f >= 0:
            outside[best_f].append(p)

    work = [fi for fi in range(4) if outside[fi]]
    while work:
        fi = work.pop()
        if not faces[fi][5] or not outside[fi]:
            continue
        cand = outside[fi]
        d = [(float(faces[fi][3] @ pts[p]) - faces[fi][4], p) for p in cand]
        _, apex = max(d)

        # grow the visible region from fi
        visible = {fi}
        stack = [fi]
        while stack:
            cur = stack.pop()
            ia, ib, ic = faces[cur][0], faces[cur][1], faces[cur][2]
            for e in ((ia, ib), (ib, ic), (ic, ia)):
                for nb in edge_map[(min(e), max(e))]:
                    if nb in visible or not faces[nb][5]:
                        continue
                    if float(faces[nb][3] @ pts[apex]) - faces[nb][4] > eps:
                        visible.add(nb)
                        stack.append(nb)

        # horizon: directed edges of visible faces whose twin stays alive
        horizon = []
        orphaned = []
        for vf in sorted(visible):
            ia, ib, ic = faces[vf][0], faces[vf][1], faces[vf][2]
            for e in ((ia, ib), (ib, ic), (ic, ia)):
                owners = edge_map[(min(e), max(e))]
                if any(o != vf and faces[o][5] and o not in visible for o in owners):
                    horizon.append(e)
            orphaned.extend(outside[vf])
            outside[vf] = []
        for vf in sorted(visible):
            drop_face(vf)
        orphaned = [p for p in orphaned if p != apex]

        new_faces = []
        for ia, ib in horizon:
            new_faces.append(add_face(ia, ib, apex))
            outside.append([])

        for p in orphaned:
            best_d, best_f = eps, -1
            for nf in new_faces:
                d = float(faces[nf][3] @ pts[p]) - faces[nf][4]
                if d > best_d:
                    best_d, best_f = d, nf
            if best_f >= 0:
                outside[best_f].append(p)
        for nf in new_faces:
            if outside[nf]:
                work.append(nf)

    used = sorted({v for f in faces if f[5] for v in (f[0], f[1], f[2])})
    remap = {old: new for new, old in enumerate(used)}
    tris = [[remap[f[0]], remap[f[1]], remap[f[2]]] for f in faces if f[5]]
    return TriangleMesh(pts[used], tris)
