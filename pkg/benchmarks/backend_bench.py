"""Timing and identity comparison of the two kernel backends.

Spawns one child per backend (KUBGEN_NUMBA=1 and =0, see backend.py),
runs the same seeded workloads in each, and prints a table of wall
times.  Every workload also returns a sha256 over
its result arrays; the digests must agree across backends or the run
exits nonzero, since bit-identical output is the fallback's contract.

    python3 benchmarks/backend_bench.py [--scale tiny|small|default] [--repeat N]

--child is the internal single-backend mode used by the parent process
and by tests/test_backend.py; it prints a JSON report on stdout.
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

SCALES = {
    "tiny": dict(resolution=32, frames=1, steps=240, rays=200, tris=1500),
    "small": dict(resolution=48, frames=1, steps=600, rays=600, tris=3000),
    "default": dict(resolution=64, frames=2, steps=1200, rays=2000, tris=6000),
}

LAYERS = (
    "rgba", "depth", "segmentation", "normal",
    "object_coordinates", "forward_flow", "backward_flow",
)


def timed(run, repeat):
    digest = run()  # warmup; absorbs jit compilation
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        run()
        best = min(best, time.perf_counter() - t0)
    return best, digest


def bench_render(resolution, frames, repeat):
    from kubgen.physics import simulate
    from kubgen.render import render_frame
    from kubgen.workers import worker_movi_basic

    sc = worker_movi_basic(5, {"max_objects": 4})
    sc.resolution = (resolution, resolution)
    sc.frame_end = sc.frame_start + frames - 1
    simulate(sc)

    def run():
        h = hashlib.sha256()
        for f in sc.frames:
            bundle = render_frame(sc, f)
            for name in LAYERS:
                h.update(getattr(bundle, name).tobytes())
        return h.hexdigest()

    return timed(run, repeat)


def bench_physics(steps, repeat):
    import numpy as np
    from kubgen.physics import World
    from kubgen.scene import RigidObject, Scene
    from kubgen.shapes import CollisionShape

    def build():
        sc = Scene(resolution=(8, 8))
        sc.add_asset(
            RigidObject(
                "floor", collision_shape=CollisionShape.box((8.0, 8.0, 0.5)),
                position=(0.0, 0.0, -0.5), is_static=True,
            )
        )
        # mixed shapes dropped in a loose grid: exercises GJK, EPA and the
        # contact solver together
        for k in range(6):
            if k % 2 == 0:
                shape = CollisionShape.sphere(0.3 + 0.05 * k)
            else:
                shape = CollisionShape.box((0.3, 0.3, 0.3))
            sc.add_asset(
                RigidObject(
                    f"body_{k}", collision_shape=shape,
                    position=((k % 3) * 0.9 - 0.9, (k // 3) * 0.9 - 0.45, 1.0 + 0.7 * k),
                    restitution=0.6, friction=0.4,
                )
            )
        return sc

    def run():
        sc = build()
        world = World.from_scene(sc)
        for _ in range(steps):
            world.step(1.0 / 240.0)
        h = hashlib.sha256()
        for obj in sc.rigid_objects:
            for value in (obj.position, obj.quaternion, obj.velocity, obj.angular_velocity):
                h.update(np.asarray(value, dtype=np.float64).tobytes())
        return h.hexdigest()

    return timed(run, repeat)


def bench_bvh(n_tris, n_rays, repeat):
    import numpy as np
    from kubgen.bvh import build_bvh
    from kubgen.mesh import TriangleMesh
    from kubgen.rng import Rng

    rng = Rng(7)
    verts = np.array(
        [[rng.uniform(-3.0, 3.0) for _ in range(3)] for _ in range(3 * n_tris)]
    )
    mesh = TriangleMesh(verts, np.arange(3 * n_tris, dtype=np.int64).reshape(-1, 3))
    bvh = build_bvh(mesh)

    ray_rng = Rng(123)
    rays = []
    for _ in range(n_rays):
        origin = np.array([ray_rng.uniform(-4.0, 4.0) for _ in range(3)])
        direction = np.array([ray_rng.uniform(-1.0, 1.0) for _ in range(3)])
        direction /= np.linalg.norm(direction)
        rays.append((origin, direction))

    def run():
        tri_ids = np.empty(n_rays, dtype=np.int64)
        hit_ts = np.empty(n_rays, dtype=np.float64)
        for i, (origin, direction) in enumerate(rays):
            tri, t = bvh.intersect(mesh.vertices, mesh.faces, origin, direction)[:2]
            tri_ids[i] = tri
            hit_ts[i] = t
        h = hashlib.sha256()
        h.update(tri_ids.tobytes())
        h.update(hit_ts.tobytes())
        return h.hexdigest()

    return timed(run, repeat)


def child_report(scale, repeat):
    from kubgen import backend

    sizes = SCALES[scale]
    times, digests = {}, {}
    times["render"], digests["render"] = bench_render(
        sizes["resolution"], sizes["frames"], repeat
    )
    times["physics"], digests["physics"] = bench_physics(sizes["steps"], repeat)
    times["bvh"], digests["bvh"] = bench_bvh(sizes["tris"], sizes["rays"], repeat)
    return {"using_numba": backend.USING_NUMBA, "times": times, "digests": digests}


def run_child(numba_flag, scale, repeat):
    env = dict(os.environ, KUBGEN_NUMBA=numba_flag)
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--child",
         "--scale", scale, "--repeat", str(repeat)],
        env=env, capture_output=True, text=True,
    )
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(f"backend child (KUBGEN_NUMBA={numba_flag}) failed")
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scale", choices=sorted(SCALES), default="default")
    parser.add_argument("--repeat", type=int, default=1)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.child:
        print(json.dumps(child_report(args.scale, args.repeat)))
        return 0

    jit = run_child("1", args.scale, args.repeat)
    plain = run_child("0", args.scale, args.repeat)
    assert jit["using_numba"] and not plain["using_numba"]

    print(f"scale={args.scale} repeat={args.repeat} (best of {args.repeat} after warmup)")
    print(f"{'workload':<10} {'numba':>10} {'numpy':>10} {'speedup':>9} {'identical':>10}")
    all_match = True
    for name in ("render", "physics", "bvh"):
        tj, tp = jit["times"][name], plain["times"][name]
        match = jit["digests"][name] == plain["digests"][name]
        all_match &= match
        print(
            f"{name:<10} {tj:>9.3f}s {tp:>9.3f}s {tp / tj:>8.1f}x "
            f"{'yes' if match else 'NO':>10}"
        )
    if not all_match:
        print("backend digests diverged", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
