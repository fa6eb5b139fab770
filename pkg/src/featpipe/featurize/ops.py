"""Feature-map utility operations: PCA visualization and keypoint retrieval."""

from __future__ import annotations

import warnings

import numpy as np

from featpipe.featurize.types import FeatureMap

_EPS = 1e-12


def pca_rgb(fm: FeatureMap) -> np.ndarray:
    """3-component PCA of a feature map as an ``H x W x 3`` float image in [0,1].

    PCA is fit per image over all H*W feature vectors. Component signs follow
    a fixed convention (the largest-magnitude loading is positive) and each
    channel is min-max scaled, so the output is deterministic. Channels with
    no variance render flat 0.5 gray.
    """
    h, w, d = fm.data.shape
    if d < 3:
        raise ValueError(f"pca_rgb needs at least 3 feature dims, got {d}")
    x = fm.data.reshape(-1, d).astype(np.float64)
    xc = x - x.mean(axis=0)
    cov = (xc.T @ xc) / max(x.shape[0] - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:3]
    top = np.maximum(evals[order], 0.0)
    comps = evecs[:, order]
    for j in range(3):
        i = np.argmax(np.abs(comps[:, j]))
        if comps[i, j] < 0:
            comps[:, j] = -comps[:, j]
    proj = xc @ comps

    out = np.empty((h * w, 3), dtype=np.float64)
    flat_channels = 0
    for j in range(3):
        lo, hi = proj[:, j].min(), proj[:, j].max()
        # A channel is flat when its variance is numerically zero relative to
        # the leading component; min-max scaling would only amplify noise.
        if hi - lo < _EPS or top[j] <= 1e-10 * max(top[0], _EPS):
            out[:, j] = 0.5
            flat_channels += 1
        else:
            out[:, j] = (proj[:, j] - lo) / (hi - lo)
    if flat_channels == 3:
        warnings.warn("feature map has no variance; PCA image is uniform gray", stacklevel=2)
    return out.reshape(h, w, 3)


def keypoint_query(
    query_fm: FeatureMap, query_point: tuple[int, int], target_fm: FeatureMap
) -> tuple[np.ndarray, tuple[int, int]]:
    """Cosine similarity of one query pixel against every target pixel.

    ``query_point`` is (x, y). Returns the ``H x W`` similarity raster and the
    argmax point (x, y), ties broken in row-major order.
    """
    if query_fm.data.shape[2] != target_fm.data.shape[2]:
        raise ValueError(
            f"feature dims differ: query {query_fm.data.shape[2]} vs "
            f"target {target_fm.data.shape[2]}"
        )
    x, y = query_point
    q = query_fm.data[y, x].astype(np.float64)
    qn = np.linalg.norm(q)
    if qn == 0:
        raise ValueError("degenerate query feature (zero norm)")
    th, tw, d = target_fm.data.shape
    flat = target_fm.data.reshape(-1, d).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1)
    sims = flat @ (q / qn)
    nz = norms > 0
    sims[nz] /= norms[nz]
    sims[~nz] = 0.0
    best = int(np.argmax(sims))
    return sims.reshape(th, tw), (best % tw, best // tw)
