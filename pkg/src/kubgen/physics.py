"""Rigid-body dynamics: broadphase, contact solving, frame recording.

Semi-implicit Euler at the scene's step_rate with a sequential impulse
solver (10 iterations).  Contacts are created inside a 2 cm margin:
separated points get a speculative velocity target of gap/dt so they
stop exactly at the surface, penetrating points get Baumgarte pushout
(beta 0.2 above a 1 mm slop).  Restitution uses the approach speed at
contact creation, so speculative contacts bounce at full strength, and
is ignored below 0.5 m/s to keep resting stacks quiet.

Friction combines as sqrt(mu_a * mu_b), restitution as max.  Bodies are
treated as if their local origin were the center of mass (true for the
bundled primitives except the cone, whose offset is small).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import quat
from ._collide import BOX, HULL, SPHERE, collide_kernel, epa_kernel, gjk_kernel, support_point
from .errors import InvalidDirection, PlacementFailed
from .mesh import convex_hull, mass_properties

CONTACT_MARGIN = 0.02
PENETRATION_SLOP = 1e-3
BAUMGARTE_BETA = 0.2
RESTITUTION_THRESHOLD = 0.5
SOLVER_ITERATIONS = 10
MIN_EVENT_IMPULSE = 1e-6


def _unpack_pose(pose):
    """(position, quaternion) or (position, quaternion, scale) -> arrays + float."""
    if len(pose) == 2:
        pos, q = pose
        s = 1.0
    else:
        pos, q, s = pose
    return np.asarray(pos, dtype=np.float64), np.asarray(q, dtype=np.float64), float(s)


def _shape_args(shape, pose):
    pos, q, s = _unpack_pose(pose)
    return (
        shape.kind, shape.params, shape.vertices,
        pos[0], pos[1], pos[2], q[0], q[1], q[2], q[3], s,
    )


def support(shape, pose, direction):
    """World-frame point of the posed shape farthest along `direction`."""
    d = np.asarray(direction, dtype=np.float64)
    if float(d @ d) == 0.0:
        raise InvalidDirection("support direction must be non-zero")
    return support_point(*_shape_args(shape, pose), d[0], d[1], d[2])


@dataclass
class GjkResult:
    intersecting: bool
    distance: float
    point_a: np.ndarray
    point_b: np.ndarray


def gjk_distance(shape_a, pose_a, shape_b, pose_b):
    """Closest distance and witness points between two posed convex shapes.

    distance is 0 and the witnesses coincide when intersecting; use
    epa_penetration for the overlap vector.  A pose is (position,
    quaternion) or (position, quaternion, scale).
    """
    inter, dist, p, q, *_ = gjk_kernel(
        *_shape_args(shape_a, pose_a), *_shape_args(shape_b, pose_b)
    )
    return GjkResult(bool(inter), float(dist), p, q)


def epa_penetration(shape_a, pose_a, shape_b, pose_b):
    """(depth, normal, point_on_a, point_on_b) for overlapping shapes.

    The normal points from A toward B; translating A by -depth * normal
    separates the pair.  Meaningful only when gjk_distance reports an
    intersection.
    """
    a = _shape_args(shape_a, pose_a)
    b = _shape_args(shape_b, pose_b)
    inter, dist, p, q, W, SA, SB, n = gjk_kernel(*a, *b)
    depth, normal, pa, pb = epa_kernel(W, SA, SB, n, *a, *b)
    return float(depth), normal, pa, pb


def shape_inertia(shape, mass, scale=1.0):
    """3x3 inertia about the local origin for a uniform solid of given mass."""
    s = float(scale)
    if shape.kind == SPHERE:
        r = shape.params[0] * s
        return np.eye(3) * (0.4 * mass * r * r)
    if shape.kind == BOX:
        ex, ey, ez = 2.0 * shape.params * s
        return np.diag(
            [
                mass / 12.0 * (ey * ey + ez * ez),
                mass / 12.0 * (ex * ex + ez * ez),
                mass / 12.0 * (ex * ex + ey * ey),
            ]
        )
    cached = getattr(shape, "_unit_props", None)
    if cached is None:
        hull = convex_hull(shape.vertices)
        cached = mass_properties(hull)
        shape._unit_props = cached
    return cached.inertia * (mass / cached.mass) * s * s


@dataclass
class ContactEvent:
    body_a: str
    body_b: str
    contact_position: np.ndarray
    contact_normal: np.ndarray  # unit, from body_a toward body_b
    impulse: float
    simulation_time: float
    frame: float


class _Contact:
    __slots__ = (
        "ia", "ib", "r_a", "r_b", "normal", "t1", "t2",
        "k_n", "k_t1", "k_t2", "target", "mu", "jn", "jt1", "jt2", "point",
    )


class World:
    """Bodies plus the machinery to advance them one substep at a time.

    State (position, quaternion, velocity, angular_velocity) lives on the
    RigidObject assets; step() pulls it into arrays, solves, and writes it
    back, so scene views stay in sync at substep granularity.
    narrowphase_tests counts pair tests that survived the AABB filter.
    """

    def __init__(self, gravity=(0.0, 0.0, -9.81), margin=CONTACT_MARGIN):
        self.gravity = np.asarray(gravity, dtype=np.float64)
        self.margin = float(margin)
        self.bodies = []
        self._inv_mass = []
        self._inertia = []
        self.narrowphase_tests = 0
        self.time = 0.0

    def add_body(self, obj):
        if obj.collision_shape is None:
            raise ValueError(f"body {obj.uid!r} has no collision shape")
        self.bodies.append(obj)
        if obj.is_static:
            self._inv_mass.append(0.0)
            self._inertia.append(None)
        else:
            self._inv_mass.append(1.0 / obj.mass)
            self._inertia.append(shape_inertia(obj.collision_shape, obj.mass, obj.scale))
        return obj

    @classmethod
    def from_scene(cls, scene, margin=CONTACT_MARGIN):
        world = cls(gravity=scene.gravity, margin=margin)
        for obj in scene.rigid_objects:
            if obj.collision_shape is not None:
                world.add_body(obj)
        return world

    def _aabb(self, obj):
        lo, hi = obj.collision_shape.local_bounds()
        lo = lo * obj.scale
        hi = hi * obj.scale
        if obj.collision_shape.kind == SPHERE:
            return obj.position + lo, obj.position + hi
        r = quat.to_matrix(obj.quaternion)
        if obj.collision_shape.kind == BOX:
            half = np.abs(r) @ hi
            return obj.position - half, obj.position + half
        pts = (obj.collision_shape.vertices * obj.scale) @ r.T
        return obj.position + pts.min(axis=0), obj.position + pts.max(axis=0)

    def _candidate_pairs(self, margin):
        n = len(self.bodies)
        boxes = [self._aabb(b) for b in self.bodies]
        pairs = []
        for i in range(n):
            for j in range(i + 1, n):
                a, b = self.bodies[i], self.bodies[j]
                if a.is_static and b.is_static:
                    continue
                lo_i, hi_i = boxes[i]
                lo_j, hi_j = boxes[j]
                if np.all(lo_i - margin <= hi_j) and np.all(lo_j - margin <= hi_i):
                    pairs.append((i, j))
        return pairs

    def _collide_pair(self, i, j, margin):
        a, b = self.bodies[i], self.bodies[j]
        self.narrowphase_tests += 1
        return collide_kernel(
            *_shape_args(a.collision_shape, (a.position, a.quaternion, a.scale)),
            *_shape_args(b.collision_shape, (b.position, b.quaternion, b.scale)),
            margin,
        )

    def check_overlap(self, body):
        """True when `body` intersects (or exactly touches) any other body."""
        try:
            bi = self.bodies.index(body)
        except ValueError:
            bi = -1
        lo_b, hi_b = self._aabb(body)
        for j, other in enumerate(self.bodies):
            if other is body:
                continue
            lo_o, hi_o = self._aabb(other)
            if not (np.all(lo_b <= hi_o) and np.all(lo_o <= hi_b)):
                continue
            self.narrowphase_tests += 1
            res = gjk_kernel(
                *_shape_args(body.collision_shape, (body.position, body.quaternion, body.scale)),
                *_shape_args(other.collision_shape, (other.position, other.quaternion, other.scale)),
            )
            if res[0] or res[1] <= 0.0:
                return True
        return False

    def step(self, dt):
        """Advance one substep; returns one ContactEvent per touching pair.

        Event impulse sums the pair's manifold points, the position is the
        impulse-weighted mean point, and simulation_time is world.time at
        the end of the substep.  Pairs under 1e-6 N-s are dropped.
        """
        bodies = self.bodies
        n = len(bodies)
        inv_m = self._inv_mass
        pos = np.array([b.position for b in bodies])
        rot = np.array([b.quaternion for b in bodies])
        vel = np.array([b.velocity for b in bodies])
        omega = np.array([b.angular_velocity for b in bodies])

        for i in range(n):
            if inv_m[i] > 0.0:
                vel[i] += self.gravity * dt

        inv_inertia = []
        for i in range(n):
            if inv_m[i] == 0.0:
                inv_inertia.append(np.zeros((3, 3)))
            else:
                r = quat.to_matrix(rot[i])
                inv_inertia.append(r @ np.linalg.inv(self._inertia[i]) @ r.T)

        contacts = []
        pair_points = {}
        for i, j in self._candidate_pairs(self.margin):
            cnt, normal, points, depths, gap = self._collide_pair(i, j, self.margin)
            if cnt == 0:
                continue
            nrm = normal.copy()
            # deterministic tangent basis
            k = int(np.argmin(np.abs(nrm)))
            e = np.zeros(3)
            e[k] = 1.0
            t1 = np.cross(nrm, e)
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(nrm, t1)
            mu = math.sqrt(bodies[i].friction * bodies[j].friction)
            rest = max(bodies[i].restitution, bodies[j].restitution)
            plist = []
            for pidx in range(cnt):
                c = _Contact()
                c.ia, c.ib = i, j
                c.point = points[pidx].copy()
                c.r_a = c.point - pos[i]
                c.r_b = c.point - pos[j]
                c.normal = nrm
                c.t1, c.t2 = t1, t2
                c.mu = mu
                c.jn = c.jt1 = c.jt2 = 0.0

                def eff_mass(axis, c=c):
                    ka = inv_m[c.ia] + inv_m[c.ib]
                    ra_x_n = np.cross(c.r_a, axis)
                    rb_x_n = np.cross(c.r_b, axis)
                    ka += ra_x_n @ inv_inertia[c.ia] @ ra_x_n
                    ka += rb_x_n @ inv_inertia[c.ib] @ rb_x_n
                    return ka

                c.k_n = eff_mass(nrm)
                c.k_t1 = eff_mass(t1)
                c.k_t2 = eff_mass(t2)

                v_rel = (
                    vel[j] + np.cross(omega[j], c.r_b) - vel[i] - np.cross(omega[i], c.r_a)
                )
                v_n0 = float(v_rel @ nrm)
                depth = float(depths[pidx])
                bounce = 0.0
                if -v_n0 > RESTITUTION_THRESHOLD:
                    bounce = rest * (-v_n0)
                if depth > 0.0:
                    base = BAUMGARTE_BETA / dt * max(0.0, depth - PENETRATION_SLOP)
                else:
                    base = depth / dt  # speculative: may close the gap, no more
                c.target = max(bounce, base)
                contacts.append(c)
                plist.append(c)
            pair_points[(i, j)] = plist

        for _ in range(SOLVER_ITERATIONS):
            for c in contacts:
                i, j = c.ia, c.ib
                v_rel = vel[j] + np.cross(omega[j], c.r_b) - vel[i] - np.cross(omega[i], c.r_a)
                v_n = float(v_rel @ c.normal)
                dj = (c.target - v_n) / c.k_n
                new_jn = max(0.0, c.jn + dj)
                dj = new_jn - c.jn
                c.jn = new_jn
                p = dj * c.normal
                vel[i] -= p * inv_m[i]
                omega[i] -= inv_inertia[i] @ np.cross(c.r_a, p)
                vel[j] += p * inv_m[j]
                omega[j] += inv_inertia[j] @ np.cross(c.r_b, p)

                max_f = c.mu * c.jn
                for axis, key, k_t in ((c.t1, "jt1", c.k_t1), (c.t2, "jt2", c.k_t2)):
                    v_rel = (
                        vel[j] + np.cross(omega[j], c.r_b) - vel[i] - np.cross(omega[i], c.r_a)
                    )
                    v_t = float(v_rel @ axis)
                    dj = -v_t / k_t
                    jt = getattr(c, key)
                    new_jt = min(max_f, max(-max_f, jt + dj))
                    dj = new_jt - jt
                    setattr(c, key, new_jt)
                    p = dj * axis
                    vel[i] -= p * inv_m[i]
                    omega[i] -= inv_inertia[i] @ np.cross(c.r_a, p)
                    vel[j] += p * inv_m[j]
                    omega[j] += inv_inertia[j] @ np.cross(c.r_b, p)

        for i in range(n):
            if inv_m[i] == 0.0:
                continue
            pos[i] = pos[i] + vel[i] * dt
            rot[i] = quat.integrate_angular(rot[i], omega[i], dt)

        for i, b in enumerate(bodies):
            if inv_m[i] == 0.0:
                continue
            b.position = pos[i]
            b.quaternion = rot[i]
            b.velocity = vel[i]
            b.angular_velocity = omega[i]

        self.time += dt

        events = []
        for (i, j), plist in pair_points.items():
            total = sum(c.jn for c in plist)
            if total <= MIN_EVENT_IMPULSE:
                continue
            w = np.array([c.jn for c in plist])
            w = w / w.sum() if w.sum() > 0 else np.full(len(plist), 1.0 / len(plist))
            point = sum(wk * c.point for wk, c in zip(w, plist))
            events.append(
                ContactEvent(
                    body_a=bodies[i].uid,
                    body_b=bodies[j].uid,
                    contact_position=np.asarray(point),
                    contact_normal=plist[0].normal.copy(),
                    impulse=float(total),
                    simulation_time=self.time,
                    frame=self.time,  # rescaled by simulate()
                )
            )
        return events


def check_overlap(world, body):
    """True when `body` intersects any other body already in `world`."""
    return world.check_overlap(body)


def step(world, dt):
    """Advance `world` by one substep of dt seconds; returns ContactEvents."""
    return world.step(dt)


@dataclass
class SimulationResult:
    events: list
    tracks: dict  # uid -> {property: KeyframeTrack}


def simulate(scene, frame_start=None, frame_end=None):
    """Run the scene's physics over its frame range and keyframe the results.

    Records position, quaternion, velocity, and angular_velocity for every
    body at every frame from frame_start to frame_end + 1 (one extra state
    past the end so consumers can difference the last frame).  Contact
    events carry time from frame_start and a fractional frame stamp.
    """
    start = scene.frame_start if frame_start is None else frame_start
    end = scene.frame_end if frame_end is None else frame_end
    world = World.from_scene(scene)
    substeps = scene.step_rate // scene.frame_rate
    dt = 1.0 / scene.step_rate

    def record(frame):
        for b in world.bodies:
            b.keyframe_insert("position", frame, b.position)
            b.keyframe_insert("quaternion", frame, b.quaternion)
            b.keyframe_insert("velocity", frame, b.velocity)
            b.keyframe_insert("angular_velocity", frame, b.angular_velocity)

    events = []
    record(start)
    for frame in range(start, end + 1):
        for _ in range(substeps):
            for ev in world.step(dt):
                ev.frame = start + ev.simulation_time * scene.frame_rate
                events.append(ev)
        record(frame + 1)

    tracks = {b.uid: dict(b.tracks) for b in world.bodies}
    return SimulationResult(events=events, tracks=tracks)


def place_without_overlap(world, body, region, rng, max_trials=100):
    """Rejection-sample a non-overlapping pose inside an axis-aligned region.

    Exactly four draws per trial, in order: x, y, z uniform over the
    region, then yaw uniform in [0, 2*pi) about +z.  The body keeps the
    first accepted pose, which is also returned as (position, quaternion,
    scale); after max_trials failures the original pose is restored and
    PlacementFailed raised.
    """
    lo = np.asarray(region[0], dtype=np.float64)
    hi = np.asarray(region[1], dtype=np.float64)
    orig_pos = body.position.copy()
    orig_rot = body.quaternion.copy()
    for _ in range(max_trials):
        x = rng.uniform(lo[0], hi[0])
        y = rng.uniform(lo[1], hi[1])
        z = rng.uniform(lo[2], hi[2])
        yaw = rng.uniform(0.0, 2.0 * math.pi)
        body.position = (x, y, z)
        body.quaternion = quat.from_axis_angle((0.0, 0.0, 1.0), yaw)
        if not world.check_overlap(body):
            return (body.position.copy(), body.quaternion.copy(), body.scale)
    body.position = orig_pos
    body.quaternion = orig_rot
    raise PlacementFailed(f"no valid pose for {body.uid!r} in {max_trials} trials")


def kinetic_energy(world):
    total = 0.0
    for i, b in enumerate(world.bodies):
        if world._inv_mass[i] == 0.0:
            continue
        total += 0.5 * b.mass * float(b.velocity @ b.velocity)
        iw = quat.to_matrix(b.quaternion) @ world._inertia[i] @ quat.to_matrix(b.quaternion).T
        total += 0.5 * float(b.angular_velocity @ iw @ b.angular_velocity)
    return total
