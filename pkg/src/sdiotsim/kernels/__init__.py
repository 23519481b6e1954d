"""Hot inner loops of the simulator.

The compiled extension ``_fifo`` is used when it was built; otherwise the
pure-Python module with identical semantics is selected.  Set
``SDIOTSIM_PURE=1`` to force the fallback.
"""

import os

import numpy as np

from . import _pure

BACKEND = "python"
_impl = _pure

if os.environ.get("SDIOTSIM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _fifo as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pure


def fifo_serve(arrivals, works, busy_until=0.0):
    """FIFO single-server recursion over sorted ``arrivals`` with service ``works``."""
    arrivals = np.ascontiguousarray(arrivals, dtype=np.float64)
    works = np.ascontiguousarray(works, dtype=np.float64)
    if arrivals.shape != works.shape:
        raise ValueError("arrivals and works must have the same length")
    return _impl.fifo_serve(arrivals, works, float(busy_until))


def window_busy(starts, ends, t0, window, n_windows):
    """Per-window busy time for sorted, non-overlapping service intervals."""
    if window <= 0:
        raise ValueError("window must be positive")
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    ends = np.ascontiguousarray(ends, dtype=np.float64)
    return _impl.window_busy(starts, ends, float(t0), float(window), int(n_windows))


__all__ = ["BACKEND", "fifo_serve", "window_busy"]
