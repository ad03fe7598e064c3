"""Kernel backend selection.

Hot numeric kernels exist twice: a numba ``@njit`` implementation and a
pure-numpy one. The environment variable ``ROBUSTCGD_BACKEND`` picks the
active one at import time:

* ``numba`` -- require numba, fail loudly if it cannot be imported,
* ``numpy`` -- vectorized numpy fallback, no JIT compilation,
* unset / ``auto`` -- numba when importable, numpy otherwise.

``benchmarks/backend_compare.py`` times the two paths against each other.
"""

import os

_FLAG = os.environ.get("ROBUSTCGD_BACKEND", "auto").strip().lower()

NUMBA_AVAILABLE = False
try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:
    pass

if _FLAG in ("", "auto"):
    BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"
elif _FLAG == "numba":
    if not NUMBA_AVAILABLE:
        raise ImportError(
            "ROBUSTCGD_BACKEND=numba but numba is not importable; "
            "install numba or set ROBUSTCGD_BACKEND=numpy"
        )
    BACKEND = "numba"
elif _FLAG == "numpy":
    BACKEND = "numpy"
else:
    raise ValueError(
        f"unknown ROBUSTCGD_BACKEND={_FLAG!r}, expected 'numba', 'numpy' or 'auto'"
    )


def get_backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return BACKEND


def using_numba():
    return BACKEND == "numba"
