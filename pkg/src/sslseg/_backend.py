"""Kernel backend selection.

Hot loops are written twice: once as numba ``@njit`` kernels and once as
vectorised numpy.  Numba is used when it is importable unless the
environment variable ``SSLSEG_DISABLE_NUMBA`` is set to a non-empty value
other than ``0``.  The choice is made once, at import time.
"""

import os

_flag = os.environ.get("SSLSEG_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _flag not in ("", "0", "false", "no")

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
