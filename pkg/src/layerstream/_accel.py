"""Optional numba acceleration.

Kernels are written once as plain loops and compiled with ``numba.njit`` when
numba is importable. Setting ``LAYERSTREAM_NO_NUMBA=1`` forces the pure-numpy
fallback implementations in :mod:`layerstream.kernels` instead.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("LAYERSTREAM_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    HAS_NUMBA = False


def njit(func):
    """Compile ``func`` in nopython mode if numba is enabled, else return it."""
    if HAS_NUMBA:
        return numba.njit(cache=True)(func)
    return func
