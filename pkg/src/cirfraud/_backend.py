"""Kernel backend selection.

The hot inner loops (Kalman recursion, exact CIR transition sampling) exist
in two forms: a numba ``@njit``-compiled version and the same function body
run as plain Python over numpy scalars. Both consume the same
``numpy.random.Generator`` and perform identical float64 operations in the
same order, so their outputs are bitwise identical; the backend only changes
speed.

Selection, checked once at import time:

* ``CIRFRAUD_BACKEND=numpy``  - force the interpreted fallback.
* ``CIRFRAUD_BACKEND=numba``  - require numba, fail loudly if missing.
* unset                       - numba when importable, numpy otherwise.
"""

from __future__ import annotations

import os

ENV_VAR = "CIRFRAUD_BACKEND"

_VALID = ("numba", "numpy")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _select() -> str:
    choice = os.environ.get(ENV_VAR, "").strip().lower()
    if choice and choice not in _VALID:
        raise RuntimeError(
            f"{ENV_VAR} must be one of {_VALID}, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _numba_available():
            raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable")
        return "numba"
    return "numba" if _numba_available() else "numpy"


#: The backend in effect for this process.
ACTIVE = _select()


def active_backend() -> str:
    """Return the kernel backend in use: ``"numba"`` or ``"numpy"``."""
    return ACTIVE


def jit_if_available(func):
    """Compile ``func`` with numba when importable, else return it unchanged.

    Used to build the jitted twin of a kernel regardless of which backend is
    active, so tests and benchmarks can compare both.
    """
    if _numba_available():
        from numba import njit

        return njit(cache=True)(func)
    return None
