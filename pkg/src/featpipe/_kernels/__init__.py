"""Hot numeric kernels: compiled extension when built, numpy fallback otherwise.

Set ``FEATPIPE_NO_EXT=1`` to force the numpy implementations (used by the
kernel benchmark and for debugging).
"""

from __future__ import annotations

import os

import numpy as np

from featpipe._kernels import _numpy

_core = None
if not os.environ.get("FEATPIPE_NO_EXT"):
    try:
        import featpipe._kernels._core as _core  # type: ignore[no-redef]
    except ImportError:
        _core = None

HAVE_COMPILED = _core is not None
BACKEND = "compiled" if HAVE_COMPILED else "numpy"


def gather_accumulate(acc: np.ndarray, values: np.ndarray, index: np.ndarray) -> None:
    """acc[n, :] += values[index[n], :] for every row n, accumulating in f64.

    ``acc`` is (N, D) float64, ``values`` (M, D) float32/float64, ``index``
    (N,) integer with entries in [0, M).
    """
    index = np.ascontiguousarray(index, dtype=np.int64)
    if acc.ndim != 2 or values.ndim != 2 or acc.shape[1] != values.shape[1]:
        raise ValueError(f"shape mismatch: acc {acc.shape} vs values {values.shape}")
    if index.shape[0] != acc.shape[0]:
        raise ValueError(f"index length {index.shape[0]} != acc rows {acc.shape[0]}")
    if _core is not None:
        values = np.ascontiguousarray(values)
        if values.dtype == np.float32:
            _core.gather_accumulate_f32(acc, values, index)
            return
        if values.dtype == np.float64:
            _core.gather_accumulate_f64(acc, values, index)
            return
    _numpy.gather_accumulate(acc, values, index)


def assign_nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point by squared Euclidean distance.

    Returns ``(labels int32, sqdist float64)``. Ties resolve to the lowest
    centroid index.

    Always dispatches to the numpy implementation: its chunked matmul
    formulation runs on BLAS and beats the scalar compiled loop by 4-10x at
    segmentation sizes (see benchmarks/kernel_bench.py). The compiled
    variant stays available as ``_core.assign_nearest`` for that comparison.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    if points.ndim != 2 or centroids.ndim != 2 or points.shape[1] != centroids.shape[1]:
        raise ValueError(f"shape mismatch: points {points.shape} vs centroids {centroids.shape}")
    if centroids.shape[0] == 0:
        raise ValueError("need at least one centroid")
    return _numpy.assign_nearest(points, centroids)
