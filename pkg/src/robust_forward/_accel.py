"""Numba switch.

Kernels are written once in a numba-compatible subset of Python and compiled
with :func:`maybe_njit`.  Setting ``ROBUST_FORWARD_NUMBA=0`` (or ``false``/``off``)
before import selects the pure-numpy fallbacks everywhere.
"""

import os

_FLAG = os.environ.get("ROBUST_FORWARD_NUMBA", "1").strip().lower()

try:
    import numba  # noqa: F401
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAVE_NUMBA = False
    njit = None

NUMBA_ENABLED = HAVE_NUMBA and _FLAG not in ("0", "false", "off", "no")

JIT_OPTIONS = {"nogil": True, "cache": True, "fastmath": False}


def maybe_njit(func):
    """Compile ``func`` with numba when available, else return it untouched."""
    if not HAVE_NUMBA:
        return func
    return njit(**JIT_OPTIONS)(func)


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
