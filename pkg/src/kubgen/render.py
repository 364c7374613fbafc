"""Ray-casting renderer: one primary ray per pixel center, exact layers.

render_frame flattens the scene at one frame into plain arrays (meshes,
hierarchies, poses, lights), traces every pixel in a single jit kernel,
and fills a FrameBundle: linear rgba, Euclidean depth (+inf on miss),
segmentation ids, world-space shading normals (flipped toward the ray),
object coordinates (local hit point normalized to the mesh bounding
box), and forward/backward optical flow in pixels.

Flow is rigid transport: the hit's object-frame point is re-posed with
the instance and camera states one frame ahead/behind and reprojected;
no occlusion reasoning.  Points that land behind the camera are
projected at the near plane and clamped to [-W..2W] x [-H..2H], with the
affected pixel count reported on the bundle.  Backward flow at the
scene's first frame has no earlier state and is zero-filled and flagged.

Shading is Lambertian: albedo * (ambient + sum of per-light visibility *
intensity * cos * attenuation), point lights falling off 1/r^2, one
shadow ray per light offset 1e-4 along the normal.  Missed pixels get
the scene background color with alpha 0.

Everything is computed per pixel with no cross-pixel state, so output is
independent of evaluation order; the kernel runs rows in order and the
result is bit-identical run to run.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .backend import jit
from ._collide import _rot
from .bvh import build_bvh, occluded_kernel, traverse_kernel
from .camera import intrinsics
from .scene import DirectionalLight, PointLight

SHADOW_OFFSET = 1e-4


@dataclass
class HitRecord:
    instance: str  # uid
    triangle: int  # index into the instance's mesh
    barycentric: np.ndarray  # weights of the triangle's three vertices
    point: np.ndarray  # world, m
    local_point: np.ndarray  # object frame before scale, m
    normal: np.ndarray  # geometric, unit, world frame
    t: float
    instance_index: int


@dataclass
class FrameBundle:
    rgba: np.ndarray  # (H, W, 4) float32, linear
    depth: np.ndarray  # (H, W, 1) float32, +inf on miss
    segmentation: np.ndarray  # (H, W, 1) uint32, 0 background
    normal: np.ndarray  # (H, W, 3) float32, zero on miss
    object_coordinates: np.ndarray  # (H, W, 3) float32 in [0,1], zero on miss
    forward_flow: np.ndarray  # (H, W, 2) float32, (dx, dy) px to next frame
    backward_flow: np.ndarray  # (H, W, 2) float32, to previous frame
    # per-pixel provenance for point tracks and warp checks
    aux_instance: np.ndarray = None  # (H, W) int64 instance index, -1 miss
    aux_local: np.ndarray = None  # (H, W, 3) float64 object-frame hit points
    instance_uids: list = field(default_factory=list)
    flow_clamped_forward: int = 0
    flow_clamped_backward: int = 0
    backward_zero_filled: bool = False


class RenderState:
    """Scene flattened at one frame for the kernels.

    Mesh blocks (vertices, triangles, hierarchy nodes) are concatenated
    with global indices; instances reference their mesh block by root
    node and carry pose, segmentation id, and material.  Hierarchies are
    cached on the mesh object, so repeated frames only re-read poses.
    """

    def __init__(self, scene, frame):
        self.scene = scene
        self.frame = frame
        cam = scene.camera
        if cam is None:
            raise ValueError("scene has no camera")
        self.resolution = scene.resolution
        self.near = cam.near_clip
        self.far = cam.far_clip
        k = intrinsics(cam, scene.resolution)
        self.fx = k[0, 0]
        self.cx = k[0, 2]
        self.cy = k[1, 2]
        self.cam_pos = cam.state_at("position", frame)
        self.cam_quat = cam.state_at("quaternion", frame)

        objs = [o for o in scene.rigid_objects if o.mesh is not None]
        self.objects = objs
        self.instance_uids = [o.uid for o in objs]

        verts_parts = []
        uv_parts = []
        tri_parts = []
        bmin_parts = []
        bmax_parts = []
        left_parts = []
        right_parts = []
        start_parts = []
        count_parts = []
        order_parts = []
        placed = {}  # id(mesh) -> (root, tri_base, bb_min, bb_ext)
        vert_base = tri_base = node_base = order_base = 0
        roots = []
        tri_bases = []
        bb_min = []
        bb_ext = []
        for o in objs:
            mesh = o.mesh
            key = id(mesh)
            if key not in placed:
                bvh = getattr(mesh, "_bvh", None)
                if bvh is None:
                    bvh = build_bvh(mesh)
                    mesh._bvh = bvh
                verts_parts.append(np.asarray(mesh.vertices, dtype=np.float64))
                if mesh.uvs is not None:
                    uv_parts.append(np.asarray(mesh.uvs, dtype=np.float64))
                else:
                    uv_parts.append(np.zeros((len(mesh.vertices), 2)))
                tri_parts.append(np.asarray(mesh.faces, dtype=np.int64) + vert_base)
                bmin_parts.append(bvh.bounds_min)
                bmax_parts.append(bvh.bounds_max)
                left_parts.append(np.where(bvh.left >= 0, bvh.left + node_base, -1))
                right_parts.append(np.where(bvh.right >= 0, bvh.right + node_base, -1))
                start_parts.append(bvh.start + order_base)
                count_parts.append(bvh.count)
                order_parts.append(bvh.order + tri_base)
                lo = mesh.vertices.min(axis=0)
                hi = mesh.vertices.max(axis=0)
                placed[key] = (node_base, tri_base, lo, hi - lo)
                vert_base += len(mesh.vertices)
                tri_base += len(mesh.faces)
                node_base += bvh.node_count
                order_base += len(bvh.order)
            root, tbase, lo, ext = placed[key]
            roots.append(root)
            tri_bases.append(tbase)
            bb_min.append(lo)
            bb_ext.append(ext)

        self.verts = np.concatenate(verts_parts) if verts_parts else np.zeros((0, 3))
        self.uvs = np.concatenate(uv_parts) if uv_parts else np.zeros((0, 2))
        self.tris = (
            np.concatenate(tri_parts) if tri_parts else np.zeros((0, 3), dtype=np.int64)
        )
        self.bmin = np.concatenate(bmin_parts) if bmin_parts else np.zeros((0, 3))
        self.bmax = np.concatenate(bmax_parts) if bmax_parts else np.zeros((0, 3))
        self.left = (
            np.concatenate(left_parts) if left_parts else np.zeros(0, dtype=np.int64)
        )
        self.right = (
            np.concatenate(right_parts) if right_parts else np.zeros(0, dtype=np.int64)
        )
        self.start = (
            np.concatenate(start_parts) if start_parts else np.zeros(0, dtype=np.int64)
        )
        self.count = (
            np.concatenate(count_parts) if count_parts else np.zeros(0, dtype=np.int64)
        )
        self.order = (
            np.concatenate(order_parts) if order_parts else np.zeros(0, dtype=np.int64)
        )

        n = len(objs)
        self.inst_root = np.array(roots, dtype=np.int64) if n else np.zeros(0, dtype=np.int64)
        self.inst_tri_base = (
            np.array(tri_bases, dtype=np.int64) if n else np.zeros(0, dtype=np.int64)
        )
        self.inst_pos = np.zeros((n, 3))
        self.inst_quat = np.zeros((n, 4))
        self.inst_scale = np.zeros(n)
        self.inst_seg = np.zeros(n, dtype=np.int64)
        self.inst_albedo = np.zeros((n, 3))
        self.inst_bb_min = np.array(bb_min) if n else np.zeros((0, 3))
        self.inst_bb_ext = np.array(bb_ext) if n else np.zeros((0, 3))
        tex_off = np.full(n, -1, dtype=np.int64)
        tex_w = np.zeros(n, dtype=np.int64)
        tex_h = np.zeros(n, dtype=np.int64)
        tex_parts = []
        tex_cursor = 0
        for i, o in enumerate(objs):
            self.inst_pos[i] = o.state_at("position", frame)
            self.inst_quat[i] = o.state_at("quaternion", frame)
            self.inst_scale[i] = o.scale
            self.inst_seg[i] = o.segmentation_id
            self.inst_albedo[i] = o.material.albedo
            tex = o.material.texture
            if tex is not None and o.mesh.uvs is not None:
                if tex.ndim == 2:
                    tex = np.repeat(tex[:, :, None], 3, axis=2)
                tex_off[i] = tex_cursor
                tex_h[i], tex_w[i] = tex.shape[0], tex.shape[1]
                tex_parts.append(np.ascontiguousarray(tex, dtype=np.float64).ravel())
                tex_cursor += tex.size
        self.inst_tex_off = tex_off
        self.inst_tex_w = tex_w
        self.inst_tex_h = tex_h
        self.tex_data = np.concatenate(tex_parts) if tex_parts else np.zeros(0)

        pls = [l for l in scene.lights if isinstance(l, PointLight)]
        dls = [l for l in scene.lights if isinstance(l, DirectionalLight)]
        self.pl_pos = (
            np.array([l.state_at("position", frame) for l in pls]) if pls else np.zeros((0, 3))
        )
        self.pl_color = (
            np.array([l.state_at("color", frame) for l in pls]) if pls else np.zeros((0, 3))
        )
        self.dl_dir = (
            np.array([l.state_at("direction", frame) for l in dls]) if dls else np.zeros((0, 3))
        )
        self.dl_color = (
            np.array([l.state_at("color", frame) for l in dls]) if dls else np.zeros((0, 3))
        )
        self.ambient = np.asarray(scene.ambient_light, dtype=np.float64).copy()
        self.background = np.asarray(scene.background_color, dtype=np.float64).copy()

    def _geo_args(self):
        return (
            self.verts, self.tris,
            self.bmin, self.bmax, self.left, self.right,
            self.start, self.count, self.order,
            self.inst_root, self.inst_pos, self.inst_quat, self.inst_scale,
        )


@jit
def trace_scene(verts, tris, bmin, bmax, left, right, start, count, order,
                inst_root, inst_pos, inst_quat, inst_scale,
                ox, oy, oz, dx, dy, dz, tmin, tmax, stack):
    """Nearest hit across instances -> (inst, tri, t, u, v); inst -1 on miss.

    t is in world units (local rays keep the world parameterization under
    uniform scale).  Ties go to the lower instance index.
    """
    best_inst = -1
    best_tri = -1
    best_t = tmax
    best_u = 0.0
    best_v = 0.0
    for i in range(inst_root.shape[0]):
        px, py, pz = inst_pos[i, 0], inst_pos[i, 1], inst_pos[i, 2]
        qw, qx, qy, qz = inst_quat[i, 0], inst_quat[i, 1], inst_quat[i, 2], inst_quat[i, 3]
        s = inst_scale[i]
        olx, oly, olz = _rot(qw, -qx, -qy, -qz, ox - px, oy - py, oz - pz)
        dlx, dly, dlz = _rot(qw, -qx, -qy, -qz, dx, dy, dz)
        olx, oly, olz = olx / s, oly / s, olz / s
        dlx, dly, dlz = dlx / s, dly / s, dlz / s
        tri, t, u, v, _ = traverse_kernel(
            verts, tris, bmin, bmax, left, right, start, count, order,
            inst_root[i], olx, oly, olz, dlx, dly, dlz, tmin, best_t, stack,
        )
        if tri >= 0 and (best_inst < 0 or t < best_t):
            best_inst = i
            best_tri = tri
            best_t = t
            best_u = u
            best_v = v
    if best_inst < 0:
        best_t = np.inf
    return best_inst, best_tri, best_t, best_u, best_v


@jit
def occluded_scene(verts, tris, bmin, bmax, left, right, start, count, order,
                   inst_root, inst_pos, inst_quat, inst_scale,
                   ox, oy, oz, dx, dy, dz, tmin, tmax, stack):
    for i in range(inst_root.shape[0]):
        px, py, pz = inst_pos[i, 0], inst_pos[i, 1], inst_pos[i, 2]
        qw, qx, qy, qz = inst_quat[i, 0], inst_quat[i, 1], inst_quat[i, 2], inst_quat[i, 3]
        s = inst_scale[i]
        olx, oly, olz = _rot(qw, -qx, -qy, -qz, ox - px, oy - py, oz - pz)
        dlx, dly, dlz = _rot(qw, -qx, -qy, -qz, dx, dy, dz)
        olx, oly, olz = olx / s, oly / s, olz / s
        dlx, dly, dlz = dlx / s, dly / s, dlz / s
        if occluded_kernel(
            verts, tris, bmin, bmax, left, right, start, count, order,
            inst_root[i], olx, oly, olz, dlx, dly, dlz, tmin, tmax, stack,
        ):
            return True
    return False


@jit
def shade_kernel(verts, tris, bmin, bmax, left, right, start, count, order,
                 inst_root, inst_pos, inst_quat, inst_scale,
                 hx, hy, hz, nx, ny, nz, ar, ag, ab,
                 ambient, pl_pos, pl_color, dl_dir, dl_color, stack):
    """Lambertian radiance at a hit -> (r, g, b) clamped to [0, 1].

    (hx,hy,hz) world hit point, (nx,ny,nz) shading normal, (ar,ag,ab)
    resolved albedo.  One shadow ray per light from the offset point.
    """
    cr = ambient[0]
    cg = ambient[1]
    cb = ambient[2]
    # offset only the visibility ray; attenuation uses the true hit point
    sx = hx + SHADOW_OFFSET * nx
    sy = hy + SHADOW_OFFSET * ny
    sz = hz + SHADOW_OFFSET * nz
    for li in range(pl_pos.shape[0]):
        lx = pl_pos[li, 0] - hx
        ly = pl_pos[li, 1] - hy
        lz = pl_pos[li, 2] - hz
        r2 = lx * lx + ly * ly + lz * lz
        dist = math.sqrt(r2)
        if dist < 1e-12:
            continue
        lx, ly, lz = lx / dist, ly / dist, lz / dist
        ndotl = nx * lx + ny * ly + nz * lz
        if ndotl <= 0.0:
            continue
        if occluded_scene(
            verts, tris, bmin, bmax, left, right, start, count, order,
            inst_root, inst_pos, inst_quat, inst_scale,
            sx, sy, sz, lx, ly, lz, 0.0, dist, stack,
        ):
            continue
        w = ndotl / r2
        cr += pl_color[li, 0] * w
        cg += pl_color[li, 1] * w
        cb += pl_color[li, 2] * w
    for li in range(dl_dir.shape[0]):
        lx, ly, lz = -dl_dir[li, 0], -dl_dir[li, 1], -dl_dir[li, 2]
        ndotl = nx * lx + ny * ly + nz * lz
        if ndotl <= 0.0:
            continue
        if occluded_scene(
            verts, tris, bmin, bmax, left, right, start, count, order,
            inst_root, inst_pos, inst_quat, inst_scale,
            sx, sy, sz, lx, ly, lz, 0.0, 1e30, stack,
        ):
            continue
        cr += dl_color[li, 0] * ndotl
        cg += dl_color[li, 1] * ndotl
        cb += dl_color[li, 2] * ndotl
    r = min(1.0, max(0.0, ar * cr))
    g = min(1.0, max(0.0, ag * cg))
    b = min(1.0, max(0.0, ab * cb))
    return r, g, b


@jit
def render_tile(width, height,
                cpx, cpy, cpz, cqw, cqx, cqy, cqz,
                fx, cx, cy, near, far,
                verts, tris, uvs,
                bmin, bmax, left, right, start, count, order,
                inst_root, inst_pos, inst_quat, inst_scale,
                inst_seg, inst_albedo,
                inst_tex_off, inst_tex_w, inst_tex_h, tex_data,
                inst_bb_min, inst_bb_ext,
                ambient, background,
                pl_pos, pl_color, dl_dir, dl_color,
                out_rgba, out_depth, out_seg, out_normal, out_obj,
                aux_inst, aux_local):
    stack = np.empty(128, dtype=np.int64)
    shadow_stack = np.empty(128, dtype=np.int64)
    for row in range(height):
        py = row + 0.5
        for col in range(width):
            px = col + 0.5
            # camera ray through the pixel center
            lx = (px - cx) / fx
            ly = (cy - py) / fx
            lz = -1.0
            norm = math.sqrt(lx * lx + ly * ly + 1.0)
            lx, ly, lz = lx / norm, ly / norm, lz / norm
            dx, dy, dz = _rot(cqw, cqx, cqy, cqz, lx, ly, lz)

            inst, tri, t, u, v = trace_scene(
                verts, tris, bmin, bmax, left, right, start, count, order,
                inst_root, inst_pos, inst_quat, inst_scale,
                cpx, cpy, cpz, dx, dy, dz, near, far, stack,
            )
            if inst < 0:
                out_rgba[row, col, 0] = background[0]
                out_rgba[row, col, 1] = background[1]
                out_rgba[row, col, 2] = background[2]
                out_rgba[row, col, 3] = 0.0
                out_depth[row, col, 0] = np.inf
                out_seg[row, col, 0] = 0
                aux_inst[row, col] = -1
                continue

            i0, i1, i2 = tris[tri, 0], tris[tri, 1], tris[tri, 2]
            w0 = 1.0 - u - v
            llx = w0 * verts[i0, 0] + u * verts[i1, 0] + v * verts[i2, 0]
            lly = w0 * verts[i0, 1] + u * verts[i1, 1] + v * verts[i2, 1]
            llz = w0 * verts[i0, 2] + u * verts[i1, 2] + v * verts[i2, 2]
            aux_local[row, col, 0] = llx
            aux_local[row, col, 1] = lly
            aux_local[row, col, 2] = llz
            aux_inst[row, col] = inst

            # geometric normal, world frame, flipped toward the ray
            e1x, e1y, e1z = verts[i1, 0] - verts[i0, 0], verts[i1, 1] - verts[i0, 1], verts[i1, 2] - verts[i0, 2]
            e2x, e2y, e2z = verts[i2, 0] - verts[i0, 0], verts[i2, 1] - verts[i0, 1], verts[i2, 2] - verts[i0, 2]
            nlx = e1y * e2z - e1z * e2y
            nly = e1z * e2x - e1x * e2z
            nlz = e1x * e2y - e1y * e2x
            qw = inst_quat[inst, 0]
            qx = inst_quat[inst, 1]
            qy = inst_quat[inst, 2]
            qz = inst_quat[inst, 3]
            nwx, nwy, nwz = _rot(qw, qx, qy, qz, nlx, nly, nlz)
            nn = math.sqrt(nwx * nwx + nwy * nwy + nwz * nwz)
            if nn > 0.0:
                nwx, nwy, nwz = nwx / nn, nwy / nn, nwz / nn
            if nwx * dx + nwy * dy + nwz * dz > 0.0:
                nwx, nwy, nwz = -nwx, -nwy, -nwz

            hx = cpx + t * dx
            hy = cpy + t * dy
            hz = cpz + t * dz

            ar = inst_albedo[inst, 0]
            ag = inst_albedo[inst, 1]
            ab = inst_albedo[inst, 2]
            toff = inst_tex_off[inst]
            if toff >= 0:
                tu = w0 * uvs[i0, 0] + u * uvs[i1, 0] + v * uvs[i2, 0]
                tv = w0 * uvs[i0, 1] + u * uvs[i1, 1] + v * uvs[i2, 1]
                tw = inst_tex_w[inst]
                th = inst_tex_h[inst]
                ti = int(tv * th)
                tj = int(tu * tw)
                if ti < 0:
                    ti = 0
                if ti >= th:
                    ti = th - 1
                if tj < 0:
                    tj = 0
                if tj >= tw:
                    tj = tw - 1
                base = toff + (ti * tw + tj) * 3
                ar = tex_data[base]
                ag = tex_data[base + 1]
                ab = tex_data[base + 2]

            r, g, b = shade_kernel(
                verts, tris, bmin, bmax, left, right, start, count, order,
                inst_root, inst_pos, inst_quat, inst_scale,
                hx, hy, hz, nwx, nwy, nwz, ar, ag, ab,
                ambient, pl_pos, pl_color, dl_dir, dl_color, shadow_stack,
            )

            out_rgba[row, col, 0] = r
            out_rgba[row, col, 1] = g
            out_rgba[row, col, 2] = b
            out_rgba[row, col, 3] = 1.0
            out_depth[row, col, 0] = t
            out_seg[row, col, 0] = inst_seg[inst]
            out_normal[row, col, 0] = nwx
            out_normal[row, col, 1] = nwy
            out_normal[row, col, 2] = nwz
            ex = inst_bb_ext[inst, 0]
            ey = inst_bb_ext[inst, 1]
            ez = inst_bb_ext[inst, 2]
            out_obj[row, col, 0] = (llx - inst_bb_min[inst, 0]) / ex if ex > 0.0 else 0.0
            out_obj[row, col, 1] = (lly - inst_bb_min[inst, 1]) / ey if ey > 0.0 else 0.0
            out_obj[row, col, 2] = (llz - inst_bb_min[inst, 2]) / ez if ez > 0.0 else 0.0


def intersect(state, ray):
    """Nearest surface along a unit-direction ray -> HitRecord or None.

    t is limited to the camera's [near_clip, far_clip] range, matching
    the primary rays of render_frame.
    """
    o = np.asarray(ray.origin, dtype=np.float64)
    d = np.asarray(ray.direction, dtype=np.float64)
    stack = np.empty(128, dtype=np.int64)
    inst, tri, t, u, v = trace_scene(
        *state._geo_args(), o[0], o[1], o[2], d[0], d[1], d[2],
        state.near, state.far, stack,
    )
    if inst < 0:
        return None
    return _hit_record(state, int(inst), int(tri), float(t), float(u), float(v), o, d)


def _hit_record(state, inst, tri, t, u, v, o, d):
    i0, i1, i2 = state.tris[tri]
    w0 = 1.0 - u - v
    local = w0 * state.verts[i0] + u * state.verts[i1] + v * state.verts[i2]
    e1 = state.verts[i1] - state.verts[i0]
    e2 = state.verts[i2] - state.verts[i0]
    nl = np.cross(e1, e2)
    nw = quat.rotate(state.inst_quat[inst], nl)
    nn = np.linalg.norm(nw)
    if nn > 0:
        nw = nw / nn
    return HitRecord(
        instance=state.instance_uids[inst],
        triangle=int(tri - state.inst_tri_base[inst]),
        barycentric=np.array([w0, u, v]),
        point=o + t * d,
        local_point=local,
        normal=nw,
        t=t,
        instance_index=inst,
    )


def shade(hit, state):
    """Lambertian rgb at a hit, shadow rays included; same math as the bundle."""
    inst = hit.instance_index
    d = hit.point - state.cam_pos
    dn = np.linalg.norm(d)
    d = d / dn if dn > 0 else np.array([0.0, 0.0, -1.0])
    n = hit.normal.copy()
    if float(n @ d) > 0.0:
        n = -n
    albedo = state.inst_albedo[inst].copy()
    if state.inst_tex_off[inst] >= 0:
        i0, i1, i2 = state.tris[hit.triangle + state.inst_tri_base[inst]]
        uvw = hit.barycentric
        tu = uvw[0] * state.uvs[i0, 0] + uvw[1] * state.uvs[i1, 0] + uvw[2] * state.uvs[i2, 0]
        tv = uvw[0] * state.uvs[i0, 1] + uvw[1] * state.uvs[i1, 1] + uvw[2] * state.uvs[i2, 1]
        tw, th = int(state.inst_tex_w[inst]), int(state.inst_tex_h[inst])
        ti = min(max(int(tv * th), 0), th - 1)
        tj = min(max(int(tu * tw), 0), tw - 1)
        base = int(state.inst_tex_off[inst]) + (ti * tw + tj) * 3
        albedo = state.tex_data[base:base + 3].copy()
    stack = np.empty(128, dtype=np.int64)
    r, g, b = shade_kernel(
        *state._geo_args(),
        hit.point[0], hit.point[1], hit.point[2], n[0], n[1], n[2],
        albedo[0], albedo[1], albedo[2],
        state.ambient, state.pl_pos, state.pl_color, state.dl_dir, state.dl_color,
        stack,
    )
    return np.array([r, g, b])


def _poses_at(objs, frame):
    pos = np.array([o.state_at("position", frame) for o in objs]) if objs else np.zeros((0, 3))
    rot = np.array([o.state_at("quaternion", frame) for o in objs]) if objs else np.zeros((0, 4))
    return pos, rot


def _transported_projection(state, target_frame, clamp):
    """Project the hit points transported to target_frame's poses.

    Returns (hit mask, x, y, clamped count) with x, y flat over the hit
    pixels.  clamp applies the behind-camera near floor and the frustum
    margin box; the frame-t base projection skips it so a motionless
    scene subtracts to exactly zero.
    """
    scene = state.scene
    h, w = state.aux_instance.shape
    hit = state.aux_instance >= 0
    if not hit.any():
        return hit, np.zeros(0), np.zeros(0), 0

    cam = scene.camera
    cam_pos = cam.state_at("position", target_frame)
    cam_rot = quat.to_matrix(cam.state_at("quaternion", target_frame))
    pos, rot = _poses_at(state.objects, target_frame)

    world = np.zeros((h, w, 3))
    for i, o in enumerate(state.objects):
        mask = state.aux_instance == i
        if not mask.any():
            continue
        r = quat.to_matrix(rot[i])
        world[mask] = (state.inst_scale[i] * state.aux_local[mask]) @ r.T + pos[i]

    local = (world[hit] - cam_pos) @ cam_rot  # rows: R^T (w - p)
    z = -local[:, 2]
    if not clamp:
        x = state.fx * local[:, 0] / z + state.cx
        y = state.cy - state.fx * local[:, 1] / z
        return hit, x, y, 0
    behind = z < state.near
    z = np.maximum(z, state.near)
    x = state.fx * local[:, 0] / z + state.cx
    y = state.cy - state.fx * local[:, 1] / z
    xc = np.clip(x, -float(w), 2.0 * w)
    yc = np.clip(y, -float(h), 2.0 * h)
    clamped = int(np.sum(behind | (x != xc) | (y != yc)))
    return hit, xc, yc, clamped


def _flow_layer(state, target_frame):
    """Flow layer toward target_frame -> ((H, W, 2) float64, clamped count).

    Pixels that miss stay zero.
    """
    h, w = state.aux_instance.shape
    flow = np.zeros((h, w, 2))
    hit, bx, by, _ = _transported_projection(state, state.frame, clamp=False)
    if not hit.any():
        return flow, 0
    _, tx, ty, clamped = _transported_projection(state, target_frame, clamp=True)
    flow[hit] = np.stack([tx - bx, ty - by], axis=1)
    return flow, clamped


def compute_flow(state, hit, pixel=None):
    """Forward/backward flow for one hit -> ((dx, dy), (dx, dy)).

    Matches the bundle layers: transport the local point with the
    instance pose at frame t+1 / t-1 and reproject with that frame's
    camera.  pixel defaults to the reprojection of the hit at frame t.
    """
    scene = state.scene
    cam = scene.camera
    obj = state.objects[hit.instance_index]
    scale = state.inst_scale[hit.instance_index]

    def reproject(frame, clamp):
        world = quat.rotate(
            obj.state_at("quaternion", frame), scale * hit.local_point
        ) + obj.state_at("position", frame)
        local = quat.rotate_inverse(
            cam.state_at("quaternion", frame), world - cam.state_at("position", frame)
        )
        z = -local[2]
        if clamp:
            z = max(z, state.near)
        x = state.fx * local[0] / z + state.cx
        y = state.cy - state.fx * local[1] / z
        if clamp:
            w, h = state.resolution
            x = min(max(x, -float(w)), 2.0 * w)
            y = min(max(y, -float(h)), 2.0 * h)
        return x, y

    if pixel is None:
        px, py = reproject(state.frame, clamp=False)
    else:
        px, py = float(pixel[0]), float(pixel[1])

    out = []
    for target in (state.frame + 1, state.frame - 1):
        if target < scene.frame_start:
            out.append(np.zeros(2))
            continue
        x, y = reproject(target, clamp=True)
        out.append(np.array([x - px, y - py]))
    return out[0], out[1]


def render_frame(scene, frame):
    """Render every pass for one frame -> FrameBundle."""
    state = RenderState(scene, frame)
    width, height = state.resolution

    rgba = np.zeros((height, width, 4))
    depth = np.zeros((height, width, 1))
    seg = np.zeros((height, width, 1), dtype=np.int64)
    normal = np.zeros((height, width, 3))
    objc = np.zeros((height, width, 3))
    aux_inst = np.full((height, width), -1, dtype=np.int64)
    aux_local = np.zeros((height, width, 3))

    render_tile(
        width, height,
        state.cam_pos[0], state.cam_pos[1], state.cam_pos[2],
        state.cam_quat[0], state.cam_quat[1], state.cam_quat[2], state.cam_quat[3],
        state.fx, state.cx, state.cy, state.near, state.far,
        state.verts, state.tris, state.uvs,
        state.bmin, state.bmax, state.left, state.right,
        state.start, state.count, state.order,
        state.inst_root, state.inst_pos, state.inst_quat, state.inst_scale,
        state.inst_seg, state.inst_albedo,
        state.inst_tex_off, state.inst_tex_w, state.inst_tex_h, state.tex_data,
        state.inst_bb_min, state.inst_bb_ext,
        state.ambient, state.background,
        state.pl_pos, state.pl_color, state.dl_dir, state.dl_color,
        rgba, depth, seg, normal, objc,
        aux_inst, aux_local,
    )

    state.aux_instance = aux_inst
    state.aux_local = aux_local

    fwd, fwd_clamped = _flow_layer(state, frame + 1)
    if frame - 1 >= scene.frame_start:
        bwd, bwd_clamped = _flow_layer(state, frame - 1)
        zero_filled = False
    else:
        bwd = np.zeros((height, width, 2))
        bwd_clamped = 0
        zero_filled = True

    return FrameBundle(
        rgba=rgba.astype(np.float32),
        depth=depth.astype(np.float32),
        segmentation=seg.astype(np.uint32),
        normal=normal.astype(np.float32),
        object_coordinates=objc.astype(np.float32),
        forward_flow=fwd.astype(np.float32),
        backward_flow=bwd.astype(np.float32),
        aux_instance=aux_inst,
        aux_local=aux_local,
        instance_uids=list(state.instance_uids),
        flow_clamped_forward=fwd_clamped,
        flow_clamped_backward=bwd_clamped,
        backward_zero_filled=zero_filled,
    )
