"""Probability-weighted majority smoothing of label rasters.

A lightweight stand-in for heavier pairwise refinement: each pixel takes the
class with the largest confidence-weighted vote in its window, iterated to a
fixed point or the iteration cap. Never introduces a class absent from the
input labels.
"""

from __future__ import annotations

import numpy as np


def _box_sum(x: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the clipped (2r+1)^2 window around each pixel, exact."""
    h, w = x.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    ii[1:, 1:] = x.cumsum(axis=0).cumsum(axis=1)
    y0 = np.clip(np.arange(h) - radius, 0, h)
    y1 = np.clip(np.arange(h) + radius + 1, 0, h)
    x0 = np.clip(np.arange(w) - radius, 0, w)
    x1 = np.clip(np.arange(w) + radius + 1, 0, w)
    return ii[np.ix_(y1, x1)] - ii[np.ix_(y0, x1)] - ii[np.ix_(y1, x0)] + ii[np.ix_(y0, x0)]


def smooth(
    labels: np.ndarray,
    probabilities: np.ndarray,
    radius: int,
    iterations: int = 5,
    classes: np.ndarray | None = None,
) -> np.ndarray:
    """Iterative weighted majority vote.

    Each neighbor votes for its current label, weighted by its probability
    for that label; ``probabilities`` is (H, W, K) with columns matching
    ``classes`` (default: sorted unique input labels). Stops when stable or
    after ``iterations`` passes.
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    labels = np.asarray(labels)
    if classes is None:
        classes = np.unique(labels)
    classes = np.asarray(classes)
    if probabilities.shape != labels.shape + (classes.size,):
        raise ValueError(
            f"probabilities shape {probabilities.shape} != "
            f"{labels.shape + (classes.size,)}"
        )

    current = labels.copy()
    col = {int(c): j for j, c in enumerate(classes)}
    for _ in range(iterations):
        own = np.zeros(labels.shape, dtype=np.float64)
        for c, j in col.items():
            m = current == c
            own[m] = probabilities[:, :, j][m]
        votes = np.stack(
            [_box_sum(np.where(current == c, own, 0.0), radius) for c in col],
            axis=-1,
        )
        new = classes[np.argmax(votes, axis=-1)]
        if np.array_equal(new, current):
            break
        current = new
    return current
