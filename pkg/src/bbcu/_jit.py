"""Optional numba acceleration for the hot loops.

Kernels are written once as plain Python over scalars and NumPy arrays.
When numba is importable and ``BBCU_DISABLE_JIT`` is unset (or ``0``) they
are compiled with ``numba.njit``; otherwise the same source runs
interpreted. The choice is made once, at import time.
"""
import os

_FLAG = os.environ.get("BBCU_DISABLE_JIT", "0").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

JIT_ENABLED = numba is not None and _FLAG in ("", "0", "false", "no")


def jit(func):
    if not JIT_ENABLED:
        return func
    return numba.njit(cache=True)(func)


__all__ = ["JIT_ENABLED", "jit"]
