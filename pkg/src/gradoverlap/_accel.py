"""Numba switch.

Set ``GRADOVERLAP_NUMBA=0`` to run every kernel as plain numpy/Python. The
kernels are written so the same source runs under both paths.
"""
import os

_OFF = {"0", "false", "no", "off"}

USE_NUMBA = os.environ.get("GRADOVERLAP_NUMBA", "1").strip().lower() not in _OFF

if USE_NUMBA:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def kernel(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it untouched."""
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
