"""Pure-Python reference versions of the compiled kernels.

Used when the extension module is unavailable or ``SDIOTSIM_PURE=1``.
"""

import numpy as np


def fifo_serve(arrivals, works, busy_until):
    """Serve a batch of sorted arrivals through a single FIFO server.

    Returns ``(starts, completions, busy_until)`` where ``busy_until`` is
    the server's new free time.
    """
    n = len(arrivals)
    starts = np.empty(n, dtype=np.float64)
    completions = np.empty(n, dtype=np.float64)
    free = float(busy_until)
    for k in range(n):
        a = arrivals[k]
        s = a if a > free else free
        free = s + works[k]
        starts[k] = s
        completions[k] = free
    return starts, completions, free


def window_busy(starts, ends, t0, window, n_windows):
    """Busy time of a single server inside each window ``[t0 + k*w, t0 + (k+1)*w)``.

    ``starts``/``ends`` are non-overlapping service intervals sorted by start.
    """
    busy = np.zeros(n_windows, dtype=np.float64)
    t_end = t0 + window * n_windows
    for k in range(len(starts)):
        s = starts[k]
        e = ends[k]
        if e <= t0 or s >= t_end:
            continue
        if s < t0:
            s = t0
        if e > t_end:
            e = t_end
        w = int((s - t0) // window)
        while s < e and w < n_windows:
            edge = t0 + (w + 1) * window
            piece = (e if e < edge else edge) - s
            busy[w] += piece
            s = edge
            w += 1
    return busy
