"""Compare the numba-compiled and pure-Python closed-loop kernels.

Usage: python3 benchmarks/bench_kernels.py [horizon_seconds]

Each backend runs in its own interpreter because the backend is fixed at
import time by ``BBCU_DISABLE_JIT``. Both must produce the same trace bit
for bit; only the wall time differs.
"""
import os
import subprocess
import sys
import tempfile

import numpy as np

WORKER = r"""
import sys, time
import numpy as np
from bbcu import analysis
from bbcu._jit import JIT_ENABLED
from bbcu.control import ControllerGains
from bbcu.plant import LoadProfile, PlantParams
from bbcu.sim import SimConfig, run_closed_loop

horizon, out = float(sys.argv[1]), sys.argv[2]
p = PlantParams()
ss = analysis.mode1_steady_state(10.0, p)
x0 = (9.0, ss.x2_star, ss.x3_star)

def run(t_end):
    cfg = SimConfig(t_end=t_end, record_stride=100)
    return run_closed_loop(p, LoadProfile([(0.0, t_end, 300.0)]), ControllerGains(), cfg, x0)

if JIT_ENABLED:
    run(1e-4)  # compile outside the timed run
t0 = time.perf_counter()
tr = run(horizon)
dt = time.perf_counter() - t0
np.save(out, np.stack([tr[c] for c in tr.data]))
print(JIT_ENABLED, dt)
"""


def run_backend(horizon, disable_jit, out):
    env = dict(os.environ)
    if disable_jit:
        env["BBCU_DISABLE_JIT"] = "1"
    else:
        env.pop("BBCU_DISABLE_JIT", None)
    res = subprocess.run([sys.executable, "-c", WORKER, str(horizon), out],
                         env=env, capture_output=True, text=True, check=True)
    jit, secs = res.stdout.split()
    return jit == "True", float(secs)


def main():
    horizon = float(sys.argv[1]) if len(sys.argv) > 1 else 0.05
    steps = int(round(horizon / 1e-6))
    with tempfile.TemporaryDirectory() as tmp:
        f_py, f_jit = os.path.join(tmp, "py.npy"), os.path.join(tmp, "jit.npy")
        _, t_py = run_backend(horizon, True, f_py)
        jit, t_jit = run_backend(horizon, False, f_jit)
        same = np.array_equal(np.load(f_py), np.load(f_jit), equal_nan=True)
    print(f"horizon {horizon:g} s, {steps} control samples")
    print(f"python : {t_py:8.3f} s  ({steps / t_py:12.0f} samples/s)")
    print(f"numba  : {t_jit:8.3f} s  ({steps / t_jit:12.0f} samples/s)"
          + ("" if jit else "  [numba not installed, fallback timed twice]"))
    print(f"speed-up {t_py / t_jit:7.1f}x, identical traces: {same}")


if __name__ == "__main__":
    main()
