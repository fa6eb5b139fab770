"""Transform-ensemble upsampling.

One forward pass per transform: featurize the transformed image,
nearest-neighbor resize the patch grid back to image resolution, apply the
inverse transform, and average. Sub-patch detail is recovered because a
shifted input spills pixel information into neighboring patches, and the
inverse shift puts it back in the right place.
"""

from __future__ import annotations

import datetime as _dt

import numpy as np

from featpipe import geometry
from featpipe._kernels import gather_accumulate
from featpipe.featurize.types import AttentionMap, BackendDescriptor, FeatureMap, FeaturizerBackend


def featurize_patches(
    backend: FeaturizerBackend, image: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Run the backend and renormalize patch attention to sum to 1."""
    feats, attn = backend.featurize(image)
    attn = np.asarray(attn, dtype=np.float64)
    total = attn.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError(f"backend {backend.descriptor.name} emitted non-positive attention")
    return np.asarray(feats), attn / total


def _patch_index_raster(descriptor: BackendDescriptor, height: int, width: int) -> np.ndarray:
    """Flat patch index per pixel: nearest-neighbor resize as a gather map.

    Pixel p of an H x W raster maps to patch row floor(p_y * hp / H) and
    column floor(p_x * wp / W).
    """
    hp, wp = descriptor.patch_grid(height, width)
    rows = (np.arange(height, dtype=np.int64) * hp) // height
    cols = (np.arange(width, dtype=np.int64) * wp) // width
    return rows[:, None] * wp + cols[None, :]


def upsample(
    backend: FeaturizerBackend,
    image: np.ndarray,
    transform_set: geometry.TransformSet,
    mode: str = "sequential",
    image_id: str | None = None,
    l2_normalize: bool = False,
) -> tuple[FeatureMap, AttentionMap]:
    """Produce dense per-pixel features and attention for ``image``.

    ``mode`` is ``sequential`` (one forward pass at a time, constant memory)
    or ``batched`` (backends with ``featurize_batch`` see same-shaped
    transformed images together). Contributions are always reduced in
    transform-set order with float64 accumulation, so both modes produce the
    same result under any backend scheduling.

    ``l2_normalize`` normalizes each patch feature vector before averaging;
    the default averages raw features.
    """
    if mode not in ("sequential", "batched"):
        raise ValueError(f"mode must be 'sequential' or 'batched', got {mode!r}")
    if len(transform_set) == 0:
        raise ValueError("transform set is empty")
    image = np.asarray(image)
    h, w = image.shape[:2]
    n_t = len(transform_set)

    # Forward passes; in batched mode group same-shaped transformed images.
    transformed = [geometry.apply(t, image) for t in transform_set]
    patch_outputs: list[tuple[np.ndarray, np.ndarray] | None] = [None] * n_t
    if mode == "batched" and hasattr(backend, "featurize_batch"):
        groups: dict[tuple[int, ...], list[int]] = {}
        for i, timg in enumerate(transformed):
            groups.setdefault(timg.shape, []).append(i)
        for idxs in groups.values():
            outs = backend.featurize_batch([transformed[i] for i in idxs])
            for i, out in zip(idxs, outs):
                patch_outputs[i] = out
        for i in range(n_t):
            feats, attn = patch_outputs[i]  # type: ignore[misc]
            attn = np.asarray(attn, dtype=np.float64)
            total = attn.sum()
            if not np.isfinite(total) or total <= 0:
                raise ValueError(
                    f"backend {backend.descriptor.name} emitted non-positive attention"
                )
            patch_outputs[i] = (np.asarray(feats), attn / total)
    else:
        for i, timg in enumerate(transformed):
            patch_outputs[i] = featurize_patches(backend, timg)

    d = backend.descriptor.hidden_dim
    acc_f = np.zeros((h * w, d), dtype=np.float64)
    acc_a = np.zeros((h * w, 1), dtype=np.float64)
    for t, out in zip(transform_set, patch_outputs):
        feats, attn = out  # type: ignore[misc]
        if feats.shape[2] != d:
            raise ValueError(
                f"backend features have dim {feats.shape[2]}, descriptor says {d}"
            )
        th, tw = geometry.output_shape(t, h, w)
        pidx = _patch_index_raster(backend.descriptor, th, tw)
        # Nearest-neighbor resize + inverse transform, fused into one gather.
        gidx = geometry.apply(geometry.invert(t), pidx).ravel()
        flat_feats = np.ascontiguousarray(feats.reshape(-1, d))
        if l2_normalize:
            norms = np.linalg.norm(flat_feats.astype(np.float64), axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            flat_feats = (flat_feats / norms).astype(flat_feats.dtype)
        gather_accumulate(acc_f, flat_feats, gidx)
        gather_accumulate(acc_a, np.ascontiguousarray(attn.reshape(-1, 1)), gidx)

    acc_f /= n_t
    acc_a /= n_t
    provenance = {
        "backend": backend.descriptor.to_json(),
        "transform_set": transform_set.to_json(),
        "image_id": image_id,
        "mode": mode,
        "l2_normalize": l2_normalize,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    fm = FeatureMap(acc_f.reshape(h, w, d).astype(np.float32), dict(provenance))
    am = AttentionMap(acc_a.reshape(h, w).astype(np.float32), dict(provenance))
    return fm, am
