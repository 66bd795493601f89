"""Optional numba acceleration.

Set ``IMPULSYM_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
is missing the numpy path is used automatically.
"""

import logging
import os

_FALSY = {"", "0", "false", "no", "off"}


def _disabled_by_env():
    return os.environ.get("IMPULSYM_DISABLE_NUMBA", "0").strip().lower() not in _FALSY


try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled_by_env()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def resolve_backend(backend=None):
    """Map ``None | "numba" | "numpy"`` to the backend actually used."""
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
