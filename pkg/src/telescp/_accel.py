"""Backend selection for the numeric kernels.

Set ``TELESCP_DISABLE_NUMBA=1`` to force the pure-numpy path even when numba
is importable. The flag is read once at import time.
"""
import os

_DISABLED = os.environ.get("TELESCP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    NUMBA_AVAILABLE = False
    _njit = None

USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator."""
    if NUMBA_AVAILABLE:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
