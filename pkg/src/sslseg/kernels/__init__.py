"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active implementation is chosen by :mod:`sslseg._backend`; both
modules stay importable (numba permitting) so tests and the benchmark can
compare them directly.
"""

from .. import _backend
from . import _numpy as numpy_impl

if _backend.HAVE_NUMBA:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_active = numba_impl if _backend.USE_NUMBA else numpy_impl

jacobi_eigh = _active.jacobi_eigh
build_histogram = _active.build_histogram
best_split = _active.best_split
predict_margins = _active.predict_margins

__all__ = [
    "jacobi_eigh",
    "build_histogram",
    "best_split",
    "predict_margins",
    "numpy_impl",
    "numba_impl",
]
