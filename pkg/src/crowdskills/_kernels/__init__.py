"""Kernel backend selection.

The DTW dynamic program binds to the compiled extension when available and
falls back to the pure loop otherwise; set ``CROWDSKILLS_PURE=1`` to force
the fallback.  Nearest-centroid assignment always uses the vectorized NumPy
form: benchmarks/bench_kernels.py shows BLAS beating the naive compiled
loop, and a single code path keeps codebook fits identical across installs.
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("CROWDSKILLS_PURE") == "1":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

dtw_distance = _impl.dtw_distance
assign_points = _pure.assign_points


def backend() -> str:
    """Name of the active DTW backend ("compiled" or "pure")."""
    return BACKEND
