"""Numeric backend selection.

The hot kernels ship in two flavours: numba ``@njit`` loops and plain
numpy/scipy fallbacks. The numba path is the default whenever numba imports;
setting the environment variable ``SIFSVM_NO_NUMBA=1`` forces the fallback
path (useful for debugging and for benchmarking the two implementations
against each other).
"""

from __future__ import annotations

import os

ENV_FLAG = "SIFSVM_NO_NUMBA"


def _numba_requested() -> bool:
    value = os.environ.get(ENV_FLAG, "").strip().lower()
    return value not in ("1", "true", "yes", "on")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _numba_requested() and _numba_available()


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
