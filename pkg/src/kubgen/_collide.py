"""Narrowphase kernels: support mappings, GJK distance, EPA penetration.

Everything here is scalar float64 written to compile under the backend
jit (numba njit or plain Python, see backend.py).  Shapes are passed
flattened: an integer kind, a 3-float params vector, and a vertex array
(empty except for hulls), plus pose (position, quaternion wxyz, uniform
scale).  The Minkowski difference is A - B throughout; returned contact
normals point from body A toward body B.

GJK is the distance variant with witness points (closest-point simplex
reduction per Ericson), terminating on relative progress, duplicate
support, or a 64-iteration cap.  EPA expands the terminal simplex into a
polytope until face growth stalls below 1e-9.
"""

import math

import numpy as np

from .backend import jit

SPHERE, BOX, HULL = 0, 1, 2

GJK_MAX_ITER = 64
EPA_MAX_ITER = 64
_EPA_MAX_VERTS = 96
_EPA_MAX_FACES = 192


@jit
def _rot(qw, qx, qy, qz, vx, vy, vz):
    # v + 2 w (qv x v) + 2 qv x (qv x v)
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    return (
        vx + qw * tx + (qy * tz - qz * ty),
        vy + qw * ty + (qz * tx - qx * tz),
        vz + qw * tz + (qx * ty - qy * tx),
    )


@jit
def _support_world(kind, params, verts, px, py, pz, qw, qx, qy, qz, s, dx, dy, dz):
    """Farthest point of the posed shape along world direction d."""
    lx, ly, lz = _rot(qw, -qx, -qy, -qz, dx, dy, dz)
    if kind == SPHERE:
        r = params[0]
        n = math.sqrt(lx * lx + ly * ly + lz * lz)
        if n < 1e-30:
            wx, wy, wz = r, 0.0, 0.0
        else:
            wx, wy, wz = r * lx / n, r * ly / n, r * lz / n
    elif kind == BOX:
        wx = params[0] if lx >= 0.0 else -params[0]
        wy = params[1] if ly >= 0.0 else -params[1]
        wz = params[2] if lz >= 0.0 else -params[2]
    else:
        best = -1e300
        bi = 0
        for i in range(verts.shape[0]):
            d = verts[i, 0] * lx + verts[i, 1] * ly + verts[i, 2] * lz
            if d > best:
                best = d
                bi = i
        wx, wy, wz = verts[bi, 0], verts[bi, 1], verts[bi, 2]
    wx, wy, wz = _rot(qw, qx, qy, qz, wx * s, wy * s, wz * s)
    return wx + px, wy + py, wz + pz


def support_point(kind, params, verts, px, py, pz, qw, qx, qy, qz, s, dx, dy, dz):
    """Array-returning wrapper over _support_world for callers outside kernels."""
    return np.array(
        _support_world(kind, params, verts, px, py, pz, qw, qx, qy, qz, s, dx, dy, dz)
    )


@jit
def _closest_triangle(ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point to the origin on triangle abc -> (px,py,pz, la,lb,lc)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    d1 = -(abx * ax + aby * ay + abz * az)
    d2 = -(acx * ax + acy * ay + acz * az)
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, 1.0, 0.0, 0.0
    d3 = -(abx * bx + aby * by + abz * bz)
    d4 = -(acx * bx + acy * by + acz * bz)
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, 0.0, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return ax + t * abx, ay + t * aby, az + t * abz, 1.0 - t, t, 0.0
    d5 = -(abx * cx + aby * cy + abz * cz)
    d6 = -(acx * cx + acy * cy + acz * cz)
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, 0.0, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return ax + t * acx, ay + t * acy, az + t * acz, 1.0 - t, 0.0, t
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + t * (cx - bx), by + t * (cy - by), bz + t * (cz - bz), 0.0, 1.0 - t, t
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (
        ax + abx * v + acx * w,
        ay + aby * v + acy * w,
        az + abz * v + acz * w,
        1.0 - v - w,
        v,
        w,
    )


@jit
def _reduce_simplex(W, SA, SB, n, lam):
    """Closest point to origin on the n-point simplex; compacts to the
    supporting subset in place.  Returns (vx, vy, vz, new_n, contained)."""
    if n == 1:
        lam[0] = 1.0
        return W[0, 0], W[0, 1], W[0, 2], 1, False
    if n == 2:
        ax, ay, az = W[0, 0], W[0, 1], W[0, 2]
        bx, by, bz = W[1, 0], W[1, 1], W[1, 2]
        dx, dy, dz = bx - ax, by - ay, bz - az
        dd = dx * dx + dy * dy + dz * dz
        if dd < 1e-300:
            lam[0] = 1.0
            return ax, ay, az, 1, False
        t = -(ax * dx + ay * dy + az * dz) / dd
        if t <= 0.0:
            lam[0] = 1.0
            return ax, ay, az, 1, False
        if t >= 1.0:
            for k in range(3):
                W[0, k] = W[1, k]
                SA[0, k] = SA[1, k]
                SB[0, k] = SB[1, k]
            lam[0] = 1.0
            return W[0, 0], W[0, 1], W[0, 2], 1, False
        lam[0] = 1.0 - t
        lam[1] = t
        return ax + t * dx, ay + t * dy, az + t * dz, 2, False
    if n == 3:
        px, py, pz, la, lb, lc = _closest_triangle(
            W[0, 0], W[0, 1], W[0, 2],
            W[1, 0], W[1, 1], W[1, 2],
            W[2, 0], W[2, 1], W[2, 2],
        )
        m = 0
        ls = (la, lb, lc)
        for i in range(3):
            if ls[i] > 0.0:
                if m != i:
                    for k in range(3):
                        W[m, k] = W[i, k]
                        SA[m, k] = SA[i, k]
                        SB[m, k] = SB[i, k]
                lam[m] = ls[i]
                m += 1
        if m == 0:  # degenerate: keep vertex a
            lam[0] = 1.0
            m = 1
        return px, py, pz, m, False

    # n == 4: check the four faces; inside all -> contained
    faces = ((0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 3, 1), (1, 2, 3, 0))
    best = 1e300
    bpx = bpy = bpz = 0.0
    bi = bj = bk = 0
    bla = blb = blc = 0.0
    outside_any = False
    for f in range(4):
        i, j, k, opp = faces[f]
        e1x, e1y, e1z = W[j, 0] - W[i, 0], W[j, 1] - W[i, 1], W[j, 2] - W[i, 2]
        e2x, e2y, e2z = W[k, 0] - W[i, 0], W[k, 1] - W[i, 1], W[k, 2] - W[i, 2]
        nx = e1y * e2z - e1z * e2y
        ny = e1z * e2x - e1x * e2z
        nz = e1x * e2y - e1y * e2x
        side_opp = (
            nx * (W[opp, 0] - W[i, 0]) + ny * (W[opp, 1] - W[i, 1]) + nz * (W[opp, 2] - W[i, 2])
        )
        side_origin = -(nx * W[i, 0] + ny * W[i, 1] + nz * W[i, 2])
        if side_opp * side_origin < 0.0:
            outside_any = True
            px, py, pz, la, lb, lc = _closest_triangle(
                W[i, 0], W[i, 1], W[i, 2],
                W[j, 0], W[j, 1], W[j, 2],
                W[k, 0], W[k, 1], W[k, 2],
            )
            d2 = px * px + py * py + pz * pz
            if d2 < best:
                best = d2
                bpx, bpy, bpz = px, py, pz
                bi, bj, bk = i, j, k
                bla, blb, blc = la, lb, lc
    if not outside_any:
        return 0.0, 0.0, 0.0, 4, True
    # gather the supporting face rows into a scratch, then compact
    tmpW = np.empty((3, 3))
    tmpA = np.empty((3, 3))
    tmpB = np.empty((3, 3))
    idx = (bi, bj, bk)
    for r in range(3):
        for c in range(3):
            tmpW[r, c] = W[idx[r], c]
            tmpA[r, c] = SA[idx[r], c]
            tmpB[r, c] = SB[idx[r], c]
    ls = (bla, blb, blc)
    m = 0
    for r in range(3):
        if ls[r] > 0.0:
            for c in range(3):
                W[m, c] = tmpW[r, c]
                SA[m, c] = tmpA[r, c]
                SB[m, c] = tmpB[r, c]
            lam[m] = ls[r]
            m += 1
    if m == 0:
        for c in range(3):
            W[0, c] = tmpW[0, c]
            SA[0, c] = tmpA[0, c]
            SB[0, c] = tmpB[0, c]
        lam[0] = 1.0
        m = 1
    return bpx, bpy, bpz, m, False


@jit
def gjk_kernel(
    ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa,
    kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb,
):
    """Distance between two convex shapes.

    Returns (intersecting, dist, p (3,), q (3,), W, SA, SB, n): p and q are
    witness points on A and B.  When intersecting, dist is 0 and the
    simplex (W/SA/SB, n) seeds EPA.
    """
    W = np.zeros((4, 3))
    SA = np.zeros((4, 3))
    SB = np.zeros((4, 3))
    lam = np.zeros(4)
    p = np.zeros(3)
    q = np.zeros(3)

    dx, dy, dz = pax - pbx, pay - pby, paz - pbz
    if dx * dx + dy * dy + dz * dz < 1e-20:
        dx, dy, dz = 1.0, 0.0, 0.0
    awx, awy, awz = _support_world(ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa, -dx, -dy, -dz)
    bwx, bwy, bwz = _support_world(kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb, dx, dy, dz)
    W[0, 0], W[0, 1], W[0, 2] = awx - bwx, awy - bwy, awz - bwz
    SA[0, 0], SA[0, 1], SA[0, 2] = awx, awy, awz
    SB[0, 0], SB[0, 1], SB[0, 2] = bwx, bwy, bwz
    n = 1

    vx = vy = vz = 0.0
    for _ in range(GJK_MAX_ITER):
        vx, vy, vz, n, contained = _reduce_simplex(W, SA, SB, n, lam)
        d2 = vx * vx + vy * vy + vz * vz
        if contained or d2 < 1e-24:
            return True, 0.0, p, q, W, SA, SB, n
        awx, awy, awz = _support_world(
            ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa, -vx, -vy, -vz
        )
        bwx, bwy, bwz = _support_world(
            kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb, vx, vy, vz
        )
        wx, wy, wz = awx - bwx, awy - bwy, awz - bwz
        # relative progress along -v
        if d2 - (vx * wx + vy * wy + vz * wz) <= 1e-12 * d2 + 1e-16:
            break
        dup = False
        for i in range(n):
            dxi = W[i, 0] - wx
            dyi = W[i, 1] - wy
            dzi = W[i, 2] - wz
            if dxi * dxi + dyi * dyi + dzi * dzi < 1e-24:
                dup = True
                break
        if dup:
            break
        W[n, 0], W[n, 1], W[n, 2] = wx, wy, wz
        SA[n, 0], SA[n, 1], SA[n, 2] = awx, awy, awz
        SB[n, 0], SB[n, 1], SB[n, 2] = bwx, bwy, bwz
        n += 1

    for i in range(n):
        p[0] += lam[i] * SA[i, 0]
        p[1] += lam[i] * SA[i, 1]
        p[2] += lam[i] * SA[i, 2]
        q[0] += lam[i] * SB[i, 0]
        q[1] += lam[i] * SB[i, 1]
        q[2] += lam[i] * SB[i, 2]
    return False, math.sqrt(vx * vx + vy * vy + vz * vz), p, q, W, SA, SB, n


@jit
def _expand_to_tetra(
    W, SA, SB, n,
    ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa,
    kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb,
):
    """Grow a 1-3 point terminal simplex into a non-degenerate tetra for EPA."""
    dirs = np.array(
        [
            [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
        ]
    )

    def add(dx, dy, dz):
        awx, awy, awz = _support_world(
            ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa, dx, dy, dz
        )
        bwx, bwy, bwz = _support_world(
            kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb, -dx, -dy, -dz
        )
        return awx - bwx, awy - bwy, awz - bwz, awx, awy, awz, bwx, bwy, bwz

    while n < 4:
        if n == 1:
            placed = False
            for d in range(6):
                wx, wy, wz, ax, ay, az, bx, by, bz = add(dirs[d, 0], dirs[d, 1], dirs[d, 2])
                ex = wx - W[0, 0]
                ey = wy - W[0, 1]
                ez = wz - W[0, 2]
                if ex * ex + ey * ey + ez * ez > 1e-18:
                    W[1, 0], W[1, 1], W[1, 2] = wx, wy, wz
                    SA[1, 0], SA[1, 1], SA[1, 2] = ax, ay, az
                    SB[1, 0], SB[1, 1], SB[1, 2] = bx, by, bz
                    placed = True
                    break
            if not placed:
                return 0
            n = 2
        elif n == 2:
            ex, ey, ez = W[1, 0] - W[0, 0], W[1, 1] - W[0, 1], W[1, 2] - W[0, 2]
            placed = False
            for d in range(6):
                cx = ey * dirs[d, 2] - ez * dirs[d, 1]
                cy = ez * dirs[d, 0] - ex * dirs[d, 2]
                cz = ex * dirs[d, 1] - ey * dirs[d, 0]
                if cx * cx + cy * cy + cz * cz < 1e-18:
                    continue
                wx, wy, wz, ax, ay, az, bx, by, bz = add(cx, cy, cz)
                ux, uy, uz = wx - W[0, 0], wy - W[0, 1], wz - W[0, 2]
                ar_x = ey * uz - ez * uy
                ar_y = ez * ux - ex * uz
                ar_z = ex * uy - ey * ux
                if ar_x * ar_x + ar_y * ar_y + ar_z * ar_z > 1e-18:
                    W[2, 0], W[2, 1], W[2, 2] = wx, wy, wz
                    SA[2, 0], SA[2, 1], SA[2, 2] = ax, ay, az
                    SB[2, 0], SB[2, 1], SB[2, 2] = bx, by, bz
                    placed = True
                    break
            if not placed:
                return 0
            n = 3
        else:
            e1x, e1y, e1z = W[1, 0] - W[0, 0], W[1, 1] - W[0, 1], W[1, 2] - W[0, 2]
            e2x, e2y, e2z = W[2, 0] - W[0, 0], W[2, 1] - W[0, 1], W[2, 2] - W[0, 2]
            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
            best_vol = 0.0
            for sgn in (1.0, -1.0):
                wx, wy, wz, ax, ay, az, bx, by, bz = add(sgn * nx, sgn * ny, sgn * nz)
                vol = (
                    nx * (wx - W[0, 0]) + ny * (wy - W[0, 1]) + nz * (wz - W[0, 2])
                )
                if abs(vol) > abs(best_vol) + 1e-18:
                    best_vol = vol
                    W[3, 0], W[3, 1], W[3, 2] = wx, wy, wz
                    SA[3, 0], SA[3, 1], SA[3, 2] = ax, ay, az
                    SB[3, 0], SB[3, 1], SB[3, 2] = bx, by, bz
            if best_vol == 0.0:
                return 0
            n = 4
    return 4


@jit
def _face_plane(V, i, j, k, cx, cy, cz):
    """Outward-oriented plane of triangle (i, j, k) w.r.t. interior point c.

    Returns (ok, j, k, nx, ny, nz, d); j and k may be swapped to orient.
    """
    e1x, e1y, e1z = V[j, 0] - V[i, 0], V[j, 1] - V[i, 1], V[j, 2] - V[i, 2]
    e2x, e2y, e2z = V[k, 0] - V[i, 0], V[k, 1] - V[i, 1], V[k, 2] - V[i, 2]
    nx = e1y * e2z - e1z * e2y
    ny = e1z * e2x - e1x * e2z
    nz = e1x * e2y - e1y * e2x
    ln = math.sqrt(nx * nx + ny * ny + nz * nz)
    if ln < 1e-300:
        return False, j, k, 0.0, 0.0, 0.0, 0.0
    nx, ny, nz = nx / ln, ny / ln, nz / ln
    if nx * (V[i, 0] - cx) + ny * (V[i, 1] - cy) + nz * (V[i, 2] - cz) < 0.0:
        j, k = k, j
        nx, ny, nz = -nx, -ny, -nz
    d = nx * V[i, 0] + ny * V[i, 1] + nz * V[i, 2]
    return True, j, k, nx, ny, nz, d


@jit
def epa_kernel(
    W, SA, SB, n,
    ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa,
    kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb,
):
    """Penetration depth and direction for overlapping shapes.

    Expands the GJK terminal simplex into a polytope enclosing the origin;
    the closest face plane gives the depth, its outward normal is the
    contact normal from A toward B, and witness points come from the
    face's barycentric coordinates.
    Returns (depth, normal (3,), point_on_a (3,), point_on_b (3,)).
    """
    nrm = np.zeros(3)
    pa_out = np.zeros(3)
    pb_out = np.zeros(3)

    n = _expand_to_tetra(
        W, SA, SB, n,
        ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa,
        kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb,
    )
    if n != 4:
        nrm[2] = 1.0
        return 0.0, nrm, pa_out, pb_out

    V = np.zeros((_EPA_MAX_VERTS, 3))
    VA = np.zeros((_EPA_MAX_VERTS, 3))
    VB = np.zeros((_EPA_MAX_VERTS, 3))
    for i in range(4):
        for c in range(3):
            V[i, c] = W[i, c]
            VA[i, c] = SA[i, c]
            VB[i, c] = SB[i, c]
    nv = 4

    cx = (V[0, 0] + V[1, 0] + V[2, 0] + V[3, 0]) * 0.25
    cy = (V[0, 1] + V[1, 1] + V[2, 1] + V[3, 1]) * 0.25
    cz = (V[0, 2] + V[1, 2] + V[2, 2] + V[3, 2]) * 0.25

    F = np.zeros((_EPA_MAX_FACES, 3), dtype=np.int64)
    FN = np.zeros((_EPA_MAX_FACES, 3))
    FD = np.zeros(_EPA_MAX_FACES)
    alive = np.zeros(_EPA_MAX_FACES, dtype=np.uint8)
    nf = 0

    for t in range(4):
        if t == 0:
            i0, j0, k0 = 0, 1, 2
        elif t == 1:
            i0, j0, k0 = 0, 1, 3
        elif t == 2:
            i0, j0, k0 = 0, 2, 3
        else:
            i0, j0, k0 = 1, 2, 3
        ok, j1, k1, nx, ny, nz, d = _face_plane(V, i0, j0, k0, cx, cy, cz)
        if not ok:
            nrm[2] = 1.0
            return 0.0, nrm, pa_out, pb_out
        F[nf, 0], F[nf, 1], F[nf, 2] = i0, j1, k1
        FN[nf, 0], FN[nf, 1], FN[nf, 2] = nx, ny, nz
        FD[nf] = d
        alive[nf] = 1
        nf += 1

    edges = np.zeros((_EPA_MAX_FACES * 3, 2), dtype=np.int64)

    for _ in range(EPA_MAX_ITER):
        best_face = -1
        best_d = 1e300
        for f in range(nf):
            if alive[f] == 1 and FD[f] < best_d:
                best_d = FD[f]
                best_face = f
        if best_face < 0:
            break
        nx, ny, nz = FN[best_face, 0], FN[best_face, 1], FN[best_face, 2]
        awx, awy, awz = _support_world(
            ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa, nx, ny, nz
        )
        bwx, bwy, bwz = _support_world(
            kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb, -nx, -ny, -nz
        )
        wx, wy, wz = awx - bwx, awy - bwy, awz - bwz
        growth = nx * wx + ny * wy + nz * wz - best_d
        if growth < 1e-9 or nv >= _EPA_MAX_VERTS:
            break
        V[nv, 0], V[nv, 1], V[nv, 2] = wx, wy, wz
        VA[nv, 0], VA[nv, 1], VA[nv, 2] = awx, awy, awz
        VB[nv, 0], VB[nv, 1], VB[nv, 2] = bwx, bwy, bwz
        wi = nv
        nv += 1

        ne = 0
        any_visible = False
        for f in range(nf):
            if alive[f] == 0:
                continue
            if FN[f, 0] * wx + FN[f, 1] * wy + FN[f, 2] * wz - FD[f] > 1e-12:
                any_visible = True
                alive[f] = 0
                for e in range(3):
                    ea = F[f, e]
                    eb = F[f, (e + 1) % 3]
                    # a twin edge cancels; a lone edge is on the horizon
                    found = -1
                    for s_ in range(ne):
                        if edges[s_, 0] == eb and edges[s_, 1] == ea:
                            found = s_
                            break
                    if found >= 0:
                        edges[found, 0] = edges[ne - 1, 0]
                        edges[found, 1] = edges[ne - 1, 1]
                        ne -= 1
                    else:
                        edges[ne, 0] = ea
                        edges[ne, 1] = eb
                        ne += 1
        if not any_visible:
            break
        room = True
        for s_ in range(ne):
            if nf >= _EPA_MAX_FACES:
                room = False
                break
            ok, j1, k1, fnx, fny, fnz, d = _face_plane(
                V, edges[s_, 0], edges[s_, 1], wi, cx, cy, cz
            )
            if not ok:
                continue
            F[nf, 0], F[nf, 1], F[nf, 2] = edges[s_, 0], j1, k1
            FN[nf, 0], FN[nf, 1], FN[nf, 2] = fnx, fny, fnz
            FD[nf] = d
            alive[nf] = 1
            nf += 1
        if not room:
            break

    best_face = -1
    best_d = 1e300
    for f in range(nf):
        if alive[f] == 1 and FD[f] < best_d:
            best_d = FD[f]
            best_face = f
    if best_face < 0:
        nrm[2] = 1.0
        return 0.0, nrm, pa_out, pb_out

    i, j, k = F[best_face, 0], F[best_face, 1], F[best_face, 2]
    nx, ny, nz = FN[best_face, 0], FN[best_face, 1], FN[best_face, 2]
    depth = FD[best_face]
    if depth < 0.0:
        depth = 0.0
    px, py, pz, la, lb, lc = _closest_triangle(
        V[i, 0], V[i, 1], V[i, 2],
        V[j, 0], V[j, 1], V[j, 2],
        V[k, 0], V[k, 1], V[k, 2],
    )
    for c in range(3):
        pa_out[c] = la * VA[i, c] + lb * VA[j, c] + lc * VA[k, c]
        pb_out[c] = la * VB[i, c] + lb * VB[j, c] + lc * VB[k, c]
    nrm[0], nrm[1], nrm[2] = nx, ny, nz
    return depth, nrm, pa_out, pb_out


@jit
def _feature_points(kind, params, verts, px, py, pz, qw, qx, qy, qz, s, dx, dy, dz, out):
    """World-space vertices of the shape's extreme feature along d.

    Fills `out` (rows of 3) with up to out.shape[0] support-tied vertices
    (dot within an extent-scaled tolerance of the max); returns the count.
    Spheres always yield the single smooth support point.
    """
    if kind == SPHERE:
        wx, wy, wz = _support_world(kind, params, verts, px, py, pz, qw, qx, qy, qz, s, dx, dy, dz)
        out[0, 0], out[0, 1], out[0, 2] = wx, wy, wz
        return 1
    lx, ly, lz = _rot(qw, -qx, -qy, -qz, dx, dy, dz)
    if kind == BOX:
        hx, hy, hz = params[0], params[1], params[2]
        extent = math.sqrt(hx * hx + hy * hy + hz * hz) * s
        tol = 1e-3 * (1.0 + extent)
        dn = math.sqrt(lx * lx + ly * ly + lz * lz)
        if dn < 1e-30:
            dn = 1.0
        best = -1e300
        cnt = 0
        for cz_ in range(2):
            for cy_ in range(2):
                for cx_ in range(2):
                    vx = hx if cx_ == 1 else -hx
                    vy = hy if cy_ == 1 else -hy
                    vz = hz if cz_ == 1 else -hz
                    d = (vx * lx + vy * ly + vz * lz) * s / dn
                    if d > best:
                        best = d
        for cz_ in range(2):
            for cy_ in range(2):
                for cx_ in range(2):
                    if cnt >= out.shape[0]:
                        break
                    vx = hx if cx_ == 1 else -hx
                    vy = hy if cy_ == 1 else -hy
                    vz = hz if cz_ == 1 else -hz
                    d = (vx * lx + vy * ly + vz * lz) * s / dn
                    if best - d <= tol:
                        wx, wy, wz = _rot(qw, qx, qy, qz, vx * s, vy * s, vz * s)
                        out[cnt, 0] = wx + px
                        out[cnt, 1] = wy + py
                        out[cnt, 2] = wz + pz
                        cnt += 1
        return cnt
    # hull
    extent = 0.0
    for i in range(verts.shape[0]):
        r2 = verts[i, 0] ** 2 + verts[i, 1] ** 2 + verts[i, 2] ** 2
        if r2 > extent:
            extent = r2
    extent = math.sqrt(extent) * s
    tol = 1e-3 * (1.0 + extent)
    dn = math.sqrt(lx * lx + ly * ly + lz * lz)
    if dn < 1e-30:
        dn = 1.0
    best = -1e300
    for i in range(verts.shape[0]):
        d = (verts[i, 0] * lx + verts[i, 1] * ly + verts[i, 2] * lz) * s / dn
        if d > best:
            best = d
    cnt = 0
    for i in range(verts.shape[0]):
        if cnt >= out.shape[0]:
            break
        d = (verts[i, 0] * lx + verts[i, 1] * ly + verts[i, 2] * lz) * s / dn
        if best - d <= tol:
            wx, wy, wz = _rot(qw, qx, qy, qz, verts[i, 0] * s, verts[i, 1] * s, verts[i, 2] * s)
            out[cnt, 0] = wx + px
            out[cnt, 1] = wy + py
            out[cnt, 2] = wz + pz
            cnt += 1
    return cnt


@jit
def _reduce_manifold(pts, cnt, keep):
    """Pick up to keep.shape[0] well-spread rows of pts[:cnt]; returns count.

    First the lowest index, then greedy farthest-point selection, which
    keeps face contacts spanning the feature instead of clustering.
    """
    cap = keep.shape[0]
    if cnt <= cap:
        for i in range(cnt):
            keep[i] = i
        return cnt
    keep[0] = 0
    chosen = 1
    while chosen < cap:
        best = -1.0
        bi = -1
        for i in range(cnt):
            taken = False
            for j in range(chosen):
                if keep[j] == i:
                    taken = True
                    break
            if taken:
                continue
            # min distance to already chosen
            mind = 1e300
            for j in range(chosen):
                k = keep[j]
                dx = pts[i, 0] - pts[k, 0]
                dy = pts[i, 1] - pts[k, 1]
                dz = pts[i, 2] - pts[k, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < mind:
                    mind = d2
            if mind > best:
                best = mind
                bi = i
        keep[chosen] = bi
        chosen += 1
    return cap


@jit
def collide_kernel(
    ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa,
    kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb,
    margin,
):
    """Full pair test: GJK, then EPA when overlapping, then manifold points.

    Returns (count, normal (3,), points (4,3), depths (4,), dist).
    count is 0 when the gap exceeds margin.  dist is the signed gap
    (negative = penetration depth).  Depths are per-point signed
    penetrations (positive inside), normal points from A to B.
    """
    points = np.zeros((4, 3))
    depths = np.zeros(4)
    normal = np.zeros(3)

    inter, dist, p, q, W, SA, SB, ns = gjk_kernel(
        ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa,
        kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb,
    )
    if not inter and dist >= margin:
        return 0, normal, points, depths, dist

    if inter:
        depth, nrm, pa_w, pb_w = epa_kernel(
            W, SA, SB, ns,
            ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa,
            kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb,
        )
        nx, ny, nz = nrm[0], nrm[1], nrm[2]
        signed_gap = -depth
    else:
        nx, ny, nz = q[0] - p[0], q[1] - p[1], q[2] - p[2]
        ln = math.sqrt(nx * nx + ny * ny + nz * nz)
        if ln < 1e-30:
            nz = 1.0
            ln = 1.0
        nx, ny, nz = nx / ln, ny / ln, nz / ln
        signed_gap = dist

    fa = np.zeros((32, 3))
    fb = np.zeros((32, 3))
    na = _feature_points(ka, pa, va, pax, pay, paz, qaw, qax, qay, qaz, sa, nx, ny, nz, fa)
    nb = _feature_points(kb, pb, vb, pbx, pby, pbz, qbw, qbx, qby, qbz, sb, -nx, -ny, -nz, fb)

    # extreme plane offsets along n
    da = -1e300
    for i in range(na):
        d = fa[i, 0] * nx + fa[i, 1] * ny + fa[i, 2] * nz
        if d > da:
            da = d
    db = 1e300
    for i in range(nb):
        d = fb[i, 0] * nx + fb[i, 1] * ny + fb[i, 2] * nz
        if d < db:
            db = d

    # contact points come from the spatially tighter feature: a vertex over
    # a face, an object face over the floor it rests on
    spread_a = 0.0
    spread_b = 0.0
    for ax in range(3):
        lo = 1e300
        hi = -1e300
        for i in range(na):
            v = fa[i, ax]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        spread_a += hi - lo
        lo = 1e300
        hi = -1e300
        for i in range(nb):
            v = fb[i, ax]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        spread_b += hi - lo

    keep = np.zeros(4, dtype=np.int64)
    if spread_a <= spread_b:
        kcnt = _reduce_manifold(fa, na, keep)
        for t in range(kcnt):
            i = keep[t]
            d_i = fa[i, 0] * nx + fa[i, 1] * ny + fa[i, 2] * nz - db
            depths[t] = d_i
            points[t, 0] = fa[i, 0] - 0.5 * d_i * nx
            points[t, 1] = fa[i, 1] - 0.5 * d_i * ny
            points[t, 2] = fa[i, 2] - 0.5 * d_i * nz
    else:
        kcnt = _reduce_manifold(fb, nb, keep)
        for t in range(kcnt):
            i = keep[t]
            d_i = da - (fb[i, 0] * nx + fb[i, 1] * ny + fb[i, 2] * nz)
            depths[t] = d_i
            points[t, 0] = fb[i, 0] + 0.5 * d_i * nx
            points[t, 1] = fb[i, 1] + 0.5 * d_i * ny
            points[t, 2] = fb[i, 2] + 0.5 * d_i * nz

    normal[0], normal[1], normal[2] = nx, ny, nz
    return kcnt, normal, points, depths, signed_gap
