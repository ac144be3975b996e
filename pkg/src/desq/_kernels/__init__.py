"""Hot-loop kernels with a selectable backend.

``DESQ_BACKEND=numpy`` forces the pure-numpy versions; otherwise the
numba versions are used when numba imports cleanly.
"""
import os

from . import _numpy

_requested = os.environ.get("DESQ_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"DESQ_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

backend = _numpy
BACKEND = "numpy"
if _requested == "numba":
    try:
        from . import _numba

        backend = _numba
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

weighted_sq_dists = backend.weighted_sq_dists
weighted_scores_ip = backend.weighted_scores_ip
cluster_sums = backend.cluster_sums
weighted_objective = backend.weighted_objective
split_scan = backend.split_scan

__all__ = [
    "BACKEND",
    "weighted_sq_dists",
    "weighted_scores_ip",
    "cluster_sums",
    "weighted_objective",
    "split_scan",
]
