"""Numba detection and the switch between compiled and pure-numpy kernels.

Set ``GAMMA_CAL_DISABLE_NUMBA=1`` (or run without numba installed) to route
every hot kernel through its pure-numpy implementation instead.
"""

import os
import warnings

_TRUTHY = {"1", "true", "yes", "on"}


def _env_disabled():
    return os.environ.get("GAMMA_CAL_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _njit = None
    warnings.warn("numba could not be imported; falling back to pure-numpy kernels")


def njit(*args, **kwargs):
    """``numba.njit`` with cache and nogil on by default; identity without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _njit(*args, **kwargs)


def use_numba():
    """True when the compiled kernels should be used for this call."""
    return HAVE_NUMBA and not _env_disabled()


def backend_name():
    return "numba" if use_numba() else "numpy"
