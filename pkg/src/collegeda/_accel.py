"""Optional numba acceleration.

Kernels are written in the numba-compatible subset of Python + numpy and
decorated with :func:`njit` from this module.  Setting the environment
variable ``COLLEGEDA_DISABLE_NUMBA=1`` (or running without numba installed)
leaves them as plain Python functions operating on numpy arrays.
"""
import os

_DISABLED = os.environ.get("COLLEGEDA_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba
except ImportError:
    numba = None

USE_NUMBA = numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
