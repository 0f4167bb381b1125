"""Select the billiard kernel backend at import time.

The compiled Cython extension is used when it has been built; otherwise the
pure-Python twin is loaded.  ``POLYQ_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("POLYQ_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
segment_integral = _impl.segment_integral
next_hit = _impl.next_hit
flow = _impl.flow
trace = _impl.trace
batch_time_average = _impl.batch_time_average

ST_OK = _kernels_py.ST_OK
ST_VERTEX = _kernels_py.ST_VERTEX
ST_STUCK = _kernels_py.ST_STUCK
ST_MAXBOUNCE = _kernels_py.ST_MAXBOUNCE
ST_CAPACITY = _kernels_py.ST_CAPACITY


def backends():
    """All importable backends, keyed by name (used by tests and the benchmark)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
