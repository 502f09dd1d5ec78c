"""Optional numba acceleration.

Set ``DEADLINE_STOP_DISABLE_JIT=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once at import time.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("DEADLINE_STOP_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("jit disabled by environment")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if _njit is None:
        return fn
    return _njit(cache=True, nogil=True)(fn)


def max_workers() -> int:
    """Worker cap from ``DEADLINE_STOP_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("DEADLINE_STOP_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
