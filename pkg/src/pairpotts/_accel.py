"""Numba switch for the hot kernels.

Set ``PAIRPOTTS_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The kernels are written in the numba-compatible subset, so both paths execute
the same source and consume the same uniforms, giving identical results.
"""

import os

NUMBA_DISABLED = os.environ.get("PAIRPOTTS_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if NUMBA_DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(func=None, **options):
    """``numba.njit(cache=True, nogil=True)`` when enabled, identity otherwise."""
    options.setdefault("cache", True)
    options.setdefault("nogil", True)

    def wrap(f):
        if HAVE_NUMBA:
            return numba.njit(**options)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap
