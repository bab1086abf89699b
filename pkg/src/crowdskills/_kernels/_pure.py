"""Pure-Python / NumPy fallbacks for the compiled kernels.

These mirror the signatures in ``_core.pyx``.  ``dtw_distance`` keeps the
exact cell-by-cell accumulation order of the compiled version, so both
backends return bitwise-identical values.  ``assign_points`` uses a
vectorised NumPy formulation whose summation order differs from the
compiled loop; assignments can in principle differ when two centroids are
equidistant to within one ulp.
"""

from __future__ import annotations

import math

import numpy as np


def dtw_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Classic DTW with Euclidean point cost, full window, no normalization.

    ``a`` and ``b`` are (n, 2) and (m, 2) float64 arrays.
    """
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("dtw_distance requires non-empty sequences")
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    for i in range(n):
        ax, ay = a[i, 0], a[i, 1]
        cur = [inf] * (m + 1)
        for j in range(m):
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            cost = math.sqrt(dx * dx + dy * dy)
            best = prev[j]
            if prev[j + 1] < best:
                best = prev[j + 1]
            if cur[j] < best:
                best = cur[j]
            cur[j + 1] = cost + best
        prev = cur
    return prev[m]


def assign_points(x: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid assignment by squared Euclidean distance.

    Returns (labels, sqdists): for each row of ``x`` the index of the
    closest row of ``c`` (ties broken by lowest index) and the squared
    distance to it.
    """
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2, clipped against fp negatives
    xx = np.einsum("ij,ij->i", x, x)
    cc = np.einsum("ij,ij->i", c, c)
    d2 = xx[:, None] - 2.0 * (x @ c.T) + cc[None, :]
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    sqd = d2[np.arange(len(x)), labels]
    return labels.astype(np.int64), sqd.astype(np.float64)
