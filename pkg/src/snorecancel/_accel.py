"""Backend selection for the hot loops.

Kernels are compiled with numba when it is importable. Setting
``SNORECANCEL_BACKEND=numpy`` (or running without numba installed) selects the
pure-numpy implementations instead. The choice is made once, at import time.
"""

import logging
import os

logger = logging.getLogger(__name__)

_requested = os.environ.get("SNORECANCEL_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"SNORECANCEL_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    njit = numba.njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(pyfunc=None, **kwargs):
        """Null decorator if numba is not available."""

        def wrap(func):
            return func

        return wrap if pyfunc is None else wrap(pyfunc)


if _requested == "numba" and not HAVE_NUMBA:  # pragma: no cover
    logger.warning("numba not importable, falling back to the numpy backend")

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"
USE_NUMBA = BACKEND == "numba"
