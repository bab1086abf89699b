"""Deterministic crowd-simulation harness with a motion-skill action space.

Agents act by selecting short trajectory primitives clustered from real
pedestrian data; the package covers ingestion, skill extraction, a
snapshot-restorable simulator, counterfactual QA generation, the metric
suite, baseline policies, and a remote-policy wire protocol.
"""

__version__ = "0.1.0"

from ._kernels import backend as kernel_backend

__all__ = ["kernel_backend", "__version__"]
