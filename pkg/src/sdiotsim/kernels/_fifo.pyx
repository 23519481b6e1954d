# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled FIFO-server and busy-window kernels."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def fifo_serve(const double[::1] arrivals, const double[::1] works, double busy_until):
    cdef Py_ssize_t n = arrivals.shape[0]
    cdef Py_ssize_t k
    cdef double a, s
    cdef double free = busy_until
    starts_arr = np.empty(n, dtype=np.float64)
    completions_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] starts = starts_arr
    cdef double[::1] completions = completions_arr
    with nogil:
        for k in range(n):
            a = arrivals[k]
            s = a if a > free else free
            free = s + works[k]
            starts[k] = s
            completions[k] = free
    return starts_arr, completions_arr, free


def window_busy(const double[::1] starts, const double[::1] ends, double t0,
                double window, Py_ssize_t n_windows):
    busy_arr = np.zeros(n_windows, dtype=np.float64)
    cdef double[::1] busy = busy_arr
    cdef double t_end = t0 + window * n_windows
    cdef Py_ssize_t k, w
    cdef double s, e, edge, piece
    with nogil:
        for k in range(starts.shape[0]):
            s = starts[k]
            e = ends[k]
            if e <= t0 or s >= t_end:
                continue
            if s < t0:
                s = t0
            if e > t_end:
                e = t_end
            w = <Py_ssize_t>((s - t0) // window)
            while s < e and w < n_windows:
                edge = t0 + (w + 1) * window
                piece = (e if e < edge else edge) - s
                busy[w] += piece
                s = edge
                w += 1
    return busy_arr
