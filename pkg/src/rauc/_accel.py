"""JIT switch.

Hot kernels are written twice: an explicit-loop version compiled with numba and a
vectorized numpy version. ``RAUC_NUMBA=0`` in the environment (or numba being
absent) selects the numpy path at import time.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba = None

_FLAG = os.environ.get("RAUC_NUMBA", "1").strip().lower()
USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")

JIT_OPTIONS = {"nogil": True, "cache": True}


def njit(fn):
    """Compile ``fn`` with numba when available; otherwise return it untouched."""
    if numba is None:
        return fn
    return numba.njit(**JIT_OPTIONS)(fn)


def pick(jitted, fallback):
    """Return the kernel selected by the environment flag."""
    return jitted if USE_NUMBA else fallback


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
