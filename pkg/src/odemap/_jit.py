"""Switch between numba-compiled kernels and the plain numpy path.

Kernels are written once and decorated with :func:`jit`.  When numba is
installed and ``ODEMAP_DISABLE_NUMBA`` is unset (or ``0``), they are compiled
with ``numba.njit``; otherwise the undecorated Python functions run as-is.
The flag is read once, at import time.
"""

import os
import warnings

_FALSY = {"", "0", "false", "no", "off"}

USE_NUMBA = os.environ.get("ODEMAP_DISABLE_NUMBA", "").strip().lower() in _FALSY

if USE_NUMBA:
    try:
        import numba
        from numba.core.errors import NumbaPerformanceWarning
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False
    else:
        # matmul on transposed (non-contiguous) views is fine at these sizes
        warnings.filterwarnings("ignore", category=NumbaPerformanceWarning)


def jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def py_func(kernel):
    """The pure-Python body of a kernel, whichever mode is active."""
    return getattr(kernel, "py_func", kernel)


def is_compiled(func) -> bool:
    return USE_NUMBA and isinstance(func, numba.core.dispatcher.Dispatcher)
