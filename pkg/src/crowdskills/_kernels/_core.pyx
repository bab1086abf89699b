# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: DTW dynamic programming and K-means assignment."""

from libc.math cimport sqrt, INFINITY

import numpy as np

cimport numpy as cnp

cnp.import_array()


def dtw_distance(double[:, ::1] a, double[:, ::1] b) -> float:
    """Classic DTW with Euclidean point cost, full window, no normalization."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        raise ValueError("dtw_distance requires non-empty sequences")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] prev_arr = np.empty(m + 1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cur_arr = np.empty(m + 1, dtype=np.float64)
    cdef double[::1] prev = prev_arr
    cdef double[::1] cur = cur_arr
    cdef double[::1] tmp
    cdef Py_ssize_t i, j
    cdef double ax, ay, dx, dy, cost, best

    prev[0] = 0.0
    for j in range(1, m + 1):
        prev[j] = INFINITY
    for i in range(n):
        ax = a[i, 0]
        ay = a[i, 1]
        cur[0] = INFINITY
        for j in range(m):
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            cost = sqrt(dx * dx + dy * dy)
            best = prev[j]
            if prev[j + 1] < best:
                best = prev[j + 1]
            if cur[j] < best:
                best = cur[j]
            cur[j + 1] = cost + best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[m]


def assign_points(double[:, ::1] x, double[:, ::1] c):
    """Nearest-centroid assignment by squared Euclidean distance.

    Returns (labels, sqdists) as int64 / float64 arrays; ties go to the
    lowest centroid index.  Kept for the kernel benchmark; the package
    binds the BLAS-backed NumPy implementation, which is faster.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sqd = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j, t
    cdef double acc, diff, best
    cdef Py_ssize_t best_j

    for i in range(n):
        best = INFINITY
        best_j = 0
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = x[i, t] - c[j, t]
                acc += diff * diff
            if acc < best:
                best = acc
                best_j = j
        labels[i] = best_j
        sqd[i] = best
    return labels, sqd
