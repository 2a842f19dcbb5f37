"""Backend selection for the sequential kernels.

Set ``SNSPDWALK_DISABLE_NUMBA=1`` to run the plain-Python/numpy path even
when numba is installed.  Both paths consume pre-drawn random numbers, so
results are bit-identical across backends.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("SNSPDWALK_DISABLE_NUMBA", "").lower() not in (
    "1", "true", "yes",
)


def jit(fn):
    """``numba.njit(cache=True)`` if enabled, else ``fn`` unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def backend() -> str:
    return "numba" if USE_NUMBA else "python"
