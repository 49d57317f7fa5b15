"""Numba acceleration toggle.

The hot kernels in :mod:`edgefed._kernels` are plain functions over numpy
arrays and scalars. By default they are compiled with ``numba.njit``; setting
the environment variable ``EDGEFED_NUMBA=0`` (or running without numba
installed) leaves them as interpreted Python. Both paths execute the exact
same statements, so results are identical; only speed differs. The flag is
read once at import time -- see ``scripts/benchmark.py`` for a side-by-side
timing of the two paths.
"""

import os
import warnings


def _requested() -> bool | None:
    raw = os.environ.get("EDGEFED_NUMBA", "").strip().lower()
    if raw in ("0", "false", "no", "off"):
        return False
    if raw in ("1", "true", "yes", "on"):
        return True
    return None  # auto: use numba when importable


_want = _requested()
if _want is False:
    NUMBA_ENABLED = False
else:
    try:
        from numba import njit as _njit  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        if _want is True:
            warnings.warn("EDGEFED_NUMBA=1 but numba is not importable; using the interpreted fallback")
        NUMBA_ENABLED = False


def maybe_jit(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it unchanged."""
    if NUMBA_ENABLED:
        return _njit(cache=True, nogil=True)(fn)
    return fn
