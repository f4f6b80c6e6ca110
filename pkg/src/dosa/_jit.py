"""Backend selection for the compiled kernels.

``DOSA_BACKEND=numpy`` forces the vectorised numpy path; the default is
``numba`` when it imports cleanly.
"""

import os

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _njit = None

_VALID = ("numba", "numpy")


def default_backend() -> str:
    requested = os.environ.get("DOSA_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        raise ValueError(f"DOSA_BACKEND must be one of {_VALID}, got {requested!r}")
    if requested == "numpy" or not HAVE_NUMBA:
        return "numpy"
    return "numba"


def njit(fn):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn
