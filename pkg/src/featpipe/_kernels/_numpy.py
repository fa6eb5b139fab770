"""Pure-numpy fallbacks for the compiled kernels."""

from __future__ import annotations

import numpy as np

# Chunk rows so the (chunk x C) distance matrix stays cache/memory friendly.
_CHUNK = 16384


def gather_accumulate(acc: np.ndarray, values: np.ndarray, index: np.ndarray) -> None:
    np.add(acc, values[index], out=acc, casting="unsafe")


def assign_nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int32)
    sqdist = np.empty(n, dtype=np.float64)
    c_sq = np.einsum("cd,cd->c", centroids, centroids)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        block = points[start:stop]
        d = block @ centroids.T
        d *= -2.0
        d += c_sq[None, :]
        lab = np.argmin(d, axis=1)
        labels[start:stop] = lab
        rows = np.arange(stop - start)
        sqdist[start:stop] = d[rows, lab] + np.einsum("nd,nd->n", block, block)
    np.maximum(sqdist, 0.0, out=sqdist)
    return labels, sqdist
