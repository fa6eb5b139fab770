"""Classical multi-scale filter-bank features for pixel classification.

The default recipe mirrors the common trainable-segmentation stacks: raw
intensity, Gaussian blur, Sobel gradient magnitude, Laplacian of Gaussian,
difference of Gaussians for consecutive scale pairs, and the two Hessian
eigenvalues, each over scales {1, 2, 4, 8, 16} with reflective boundaries.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

DEFAULT_SCALES = (1.0, 2.0, 4.0, 8.0, 16.0)

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FilterRecipe:
    scales: tuple[float, ...] = DEFAULT_SCALES
    mode: str = "gray"  # "gray" | "per-channel"

    def __post_init__(self) -> None:
        if self.mode not in ("gray", "per-channel"):
            raise ValueError(f"mode must be 'gray' or 'per-channel', got {self.mode!r}")
        if any(s <= 0 for s in self.scales):
            raise ValueError(f"scales must be positive, got {self.scales}")

    def channel_names(self) -> list[str]:
        names = ["raw"]
        names += [f"gauss-{s:g}" for s in self.scales]
        names += [f"sobelmag-{s:g}" for s in self.scales]
        names += [f"log-{s:g}" for s in self.scales]
        names += [
            f"dog-{a:g}-{b:g}" for a, b in zip(self.scales, self.scales[1:])
        ]
        for s in self.scales:
            names += [f"hess-hi-{s:g}", f"hess-lo-{s:g}"]
        return names

    @property
    def n_channels(self) -> int:
        return len(self.channel_names())

    def to_json(self) -> str:
        return json.dumps({"scales": list(self.scales), "mode": self.mode}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "FilterRecipe":
        doc = json.loads(text)
        return FilterRecipe(scales=tuple(float(s) for s in doc["scales"]), mode=doc["mode"])

    def checksum(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass
class ClassicalFeatureStack:
    data: np.ndarray  # (H, W, Dc) float32
    recipe: FilterRecipe


_D2 = np.array([1.0, -2.0, 1.0])
_D1 = np.array([0.5, 0.0, -0.5])


def _bank(gray: np.ndarray, scales: tuple[float, ...]) -> list[np.ndarray]:
    # Derivatives are discrete stencils over the Gaussian-smoothed image:
    # analytic derivative-of-Gaussian kernels leak DC under truncation, which
    # would break the exact-zero response on constant inputs.
    out = [gray]
    smoothed = {s: ndimage.gaussian_filter(gray, s, mode="reflect") for s in scales}
    out += [smoothed[s] for s in scales]
    for s in scales:
        gx = ndimage.sobel(smoothed[s], axis=1, mode="reflect")
        gy = ndimage.sobel(smoothed[s], axis=0, mode="reflect")
        out.append(np.hypot(gx, gy))
    out += [ndimage.laplace(smoothed[s], mode="reflect") for s in scales]
    out += [smoothed[a] - smoothed[b] for a, b in zip(scales, scales[1:])]
    for s in scales:
        sm = smoothed[s]
        hxx = ndimage.correlate1d(sm, _D2, axis=1, mode="reflect")
        hyy = ndimage.correlate1d(sm, _D2, axis=0, mode="reflect")
        hxy = ndimage.correlate1d(
            ndimage.correlate1d(sm, _D1, axis=0, mode="reflect"), _D1, axis=1, mode="reflect"
        )
        mid = 0.5 * (hxx + hyy)
        root = np.sqrt(np.maximum(0.25 * (hxx - hyy) ** 2 + hxy**2, 0.0))
        out.append(mid + root)
        out.append(mid - root)
    return out


def classical_features(
    image: np.ndarray, recipe: FilterRecipe | None = None
) -> ClassicalFeatureStack:
    """Compute the filter-bank stack for an image; deterministic per recipe."""
    recipe = recipe or FilterRecipe()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        planes = [img]
    elif img.ndim == 3:
        if recipe.mode == "per-channel":
            planes = [img[:, :, c] for c in range(img.shape[2])]
        elif img.shape[2] == 3:
            planes = [img @ _LUMA]
        else:
            planes = [img.mean(axis=2)]
    else:
        raise ValueError(f"expected HxW or HxWxC image, got shape {image.shape}")

    channels: list[np.ndarray] = []
    for plane in planes:
        channels.extend(_bank(plane, recipe.scales))
    data = np.stack(channels, axis=-1).astype(np.float32)
    return ClassicalFeatureStack(data=data, recipe=recipe)
