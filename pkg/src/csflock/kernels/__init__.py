"""Hot integration kernels.

The numba backend is used when numba imports and ``CSFLOCK_DISABLE_NUMBA`` is
unset (or ``0``/``false``); otherwise the pure-numpy backend runs. Both expose
``run_rk4`` with an identical signature and results equal to rounding.
"""

import os

from . import _numpy as numpy_backend

try:
    from . import _numba as numba_backend
except ImportError:  # numba not installed
    numba_backend = None

WEIGHT_CONSTANT = 0
WEIGHT_ALGEBRAIC = 1


def _numba_disabled() -> bool:
    flag = os.environ.get("CSFLOCK_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("", "0", "false", "no")


BACKEND = "numpy" if numba_backend is None or _numba_disabled() else "numba"
run_rk4 = numpy_backend.run_rk4 if BACKEND == "numpy" else numba_backend.run_rk4

__all__ = ["BACKEND", "run_rk4", "numpy_backend", "numba_backend", "WEIGHT_CONSTANT", "WEIGHT_ALGEBRAIC"]
