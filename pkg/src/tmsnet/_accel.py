"""Numba switch.

Set ``TMSNET_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. for
debugging or on platforms without an LLVM toolchain.
"""
import os
import warnings

DISABLED = os.environ.get("TMSNET_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAVE_NUMBA = False
    _njit = None
    if not DISABLED:
        warnings.warn("numba not importable, falling back to numpy kernels")

USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)

    def decorator(func):
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return decorator
