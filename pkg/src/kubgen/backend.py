"""Kernel backend selection.

Hot loops (ray casting, GJK, the contact solver) are written as plain
scalar-loop functions over numpy arrays and decorated with `jit`.  By
default `jit` is numba's njit with on-disk caching; setting KUBGEN_NUMBA=0
in the environment makes `jit` a no-op so the same source runs as ordinary
Python.  Both paths do float64 IEEE arithmetic in the same order (no
fastmath, no reassociation), so results are bit-identical; see
benchmarks/backend_bench.py for the comparison harness.

The flag is read once at import.  Switching inside a process is not
supported; tests that exercise the fallback spawn a subprocess.
"""

import os

USING_NUMBA = os.environ.get("KUBGEN_NUMBA", "1") != "0"

if USING_NUMBA:
    import numba

    def jit(fn):
        return numba.njit(cache=True)(fn)

else:

    def jit(fn):
        return fn
