"""The pure-numpy fallback must be bit-identical to the jit path.

Backend choice is fixed at import, so each backend runs in its own
subprocess via the benchmark harness's child mode.
"""

import json
import os
import subprocess
import sys
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "backend_bench.py"


def run_backend(numba_flag):
    env = dict(os.environ, KUBGEN_NUMBA=numba_flag)
    proc = subprocess.run(
        [sys.executable, str(BENCH), "--child", "--scale", "tiny"],
        env=env, capture_output=True, text=True, timeout=600,
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


def test_fallback_digests_match_jit():
    jit = run_backend("1")
    plain = run_backend("0")
    assert jit["using_numba"] is True
    assert plain["using_numba"] is False
    assert set(jit["digests"]) == {"render", "physics", "bvh"}
    assert jit["digests"] == plain["digests"]
