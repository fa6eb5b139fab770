"""Featurizer backends: deterministic synthetics, precomputed archives, and a
TorchScript model runtime.

Synthetic backends exist so every downstream workflow can be exercised with
exactly predictable features:

* ``patch-mean``: feature = per-channel mean of the patch pixels, uniform
  patch attention.
* ``patch-mean-center``: same features, attention proportional to a Gaussian
  of patch-center distance to the image center.
"""

from __future__ import annotations

from pathlib import Path
from urllib.parse import parse_qsl

import numpy as np

from featpipe.featurize.io import read_fmap
from featpipe.featurize.types import BackendDescriptor


def _as_hwc(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise ValueError(f"expected HxW or HxWxC image, got shape {image.shape}")
    return image


def _integral(img: np.ndarray) -> np.ndarray:
    h, w, c = img.shape
    ii = np.zeros((h + 1, w + 1, c), dtype=np.float64)
    ii[1:, 1:] = img.astype(np.float64).cumsum(axis=0).cumsum(axis=1)
    return ii


class PatchMeanBackend:
    """Per-patch channel means with uniform or center-weighted attention."""

    def __init__(
        self,
        patch_size: int = 4,
        stride: int | None = None,
        channels: int = 3,
        attention: str = "uniform",
        center_sigma_frac: float = 0.15,
    ):
        if attention not in ("uniform", "center"):
            raise ValueError(f"attention must be 'uniform' or 'center', got {attention!r}")
        stride = patch_size if stride is None else stride
        name = "patch-mean" if attention == "uniform" else "patch-mean-center"
        self.attention = attention
        self.center_sigma_frac = float(center_sigma_frac)
        self.descriptor = BackendDescriptor(
            name=name,
            patch_size=int(patch_size),
            stride=int(stride),
            hidden_dim=int(channels),
            multiple_of=int(stride),
        )

    def _attention_grid(self, height: int, width: int) -> np.ndarray:
        d = self.descriptor
        hp, wp = d.patch_grid(height, width)
        if self.attention == "uniform":
            att = np.full((hp, wp), 1.0 / (hp * wp))
        else:
            cy = np.arange(hp) * d.stride + d.patch_size / 2.0
            cx = np.arange(wp) * d.stride + d.patch_size / 2.0
            sigma = self.center_sigma_frac * min(height, width)
            ry = (cy - height / 2.0) ** 2
            rx = (cx - width / 2.0) ** 2
            att = np.exp(-(ry[:, None] + rx[None, :]) / (2.0 * sigma * sigma))
            att /= att.sum()
        return att

    def featurize(self, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        img = _as_hwc(image)
        h, w, c = img.shape
        d = self.descriptor
        if c != d.hidden_dim:
            raise ValueError(
                f"backend {d.name} expects {d.hidden_dim} channels, image has {c}"
            )
        hp, wp = d.patch_grid(h, w)
        ii = _integral(img)
        ys = np.arange(hp) * d.stride
        xs = np.arange(wp) * d.stride
        p = d.patch_size
        box = (
            ii[np.ix_(ys + p, xs + p)]
            - ii[np.ix_(ys, xs + p)]
            - ii[np.ix_(ys + p, xs)]
            + ii[np.ix_(ys, xs)]
        )
        feats = (box / (p * p)).astype(np.float32)
        return feats, self._attention_grid(h, w).astype(np.float64)

    def featurize_batch(self, images: list[np.ndarray]) -> list[tuple[np.ndarray, np.ndarray]]:
        return [self.featurize(im) for im in images]


class PrecomputedBackend:
    """Serves archived patch features/attention bit-exactly.

    The archive holds the *patch-grid* tensors (features ``hp x wp x D``,
    attention ``hp x wp x 1``); the declared patch size and stride must
    reproduce that grid for the images this backend is asked about.
    """

    def __init__(self, features_path: str | Path, attention_path: str | Path,
                 patch_size: int, stride: int | None = None, name: str = "precomputed"):
        self._features, _ = read_fmap(features_path)
        attn, _ = read_fmap(attention_path)
        if attn.shape[2] != 1:
            raise ValueError(f"attention archive must have d=1, got {attn.shape}")
        self._attention = attn[:, :, 0].astype(np.float64)
        if self._attention.shape != self._features.shape[:2]:
            raise ValueError(
                f"attention grid {self._attention.shape} != feature grid "
                f"{self._features.shape[:2]}"
            )
        stride = patch_size if stride is None else stride
        self.descriptor = BackendDescriptor(
            name=name,
            patch_size=int(patch_size),
            stride=int(stride),
            hidden_dim=int(self._features.shape[2]),
            multiple_of=int(stride),
        )

    def featurize(self, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        img = _as_hwc(image)
        grid = self.descriptor.patch_grid(img.shape[0], img.shape[1])
        if grid != self._features.shape[:2]:
            raise ValueError(
                f"archived grid {self._features.shape[:2]} does not match grid "
                f"{grid} implied by a {img.shape[0]}x{img.shape[1]} image"
            )
        return self._features, self._attention


class TorchscriptBackend:
    """Runs a single-file TorchScript network emitting (features, attention).

    The scripted module takes a float32 NCHW tensor scaled to [0, 1] and must
    return patch features shaped ``(hp, wp, D)`` (an optional leading batch
    axis of 1 is squeezed) and attention ``(hp, wp)``. A frozen graph cannot
    be re-strided, so the declared stride equals the patch size.
    """

    def __init__(self, model_path: str | Path, patch_size: int, hidden_dim: int,
                 working_size: int | None = None, name: str | None = None):
        try:
            import torch
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise RuntimeError(
                "the torchscript backend needs torch (install featpipe[modelrt])"
            ) from exc
        self._torch = torch
        try:
            self._model = torch.jit.load(str(model_path), map_location="cpu")
        except Exception as exc:
            raise RuntimeError(f"failed to load model {model_path}: {exc}") from exc
        self._model.eval()
        self.descriptor = BackendDescriptor(
            name=name or f"torchscript:{Path(model_path).name}",
            patch_size=int(patch_size),
            stride=int(patch_size),
            hidden_dim=int(hidden_dim),
            multiple_of=int(patch_size),
            working_size=working_size,
        )

    def _squeeze_batch(self, t: np.ndarray, ndim: int) -> np.ndarray:
        if t.ndim == ndim + 1 and t.shape[0] == 1:
            return t[0]
        return t

    def featurize(self, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        torch = self._torch
        img = _as_hwc(image)
        if img.dtype == np.uint8:
            img = img.astype(np.float32) / 255.0
        x = torch.from_numpy(np.ascontiguousarray(img.astype(np.float32)))
        x = x.permute(2, 0, 1).unsqueeze(0)
        with torch.no_grad():
            out = self._model(x)
        if not isinstance(out, (tuple, list)) or len(out) != 2:
            raise ValueError("model must return (features, attention)")
        feats = self._squeeze_batch(out[0].cpu().numpy(), 3)
        attn = self._squeeze_batch(out[1].cpu().numpy(), 2)
        grid = self.descriptor.patch_grid(img.shape[0], img.shape[1])
        want = grid + (self.descriptor.hidden_dim,)
        if feats.shape != want:
            raise ValueError(f"model features shape {feats.shape} != declared {want}")
        if attn.shape != grid:
            raise ValueError(f"model attention shape {attn.shape} != declared {grid}")
        return feats.astype(np.float32), attn.astype(np.float64)


def get_backend(spec: str):
    """Build a backend from a compact spec string.

    Examples: ``synthetic:patch-mean?patch=4&stride=4``,
    ``synthetic:patch-mean-center?patch=4&sigma=0.2``,
    ``precomputed:feats.fmap,attn.fmap?patch=4``,
    ``torchscript:model.pt?patch=14&dim=384&working=518``.
    """
    kind, _, rest = spec.partition(":")
    body, _, query = rest.partition("?")
    opts = dict(parse_qsl(query))
    if kind == "synthetic":
        patch = int(opts.get("patch", 4))
        stride = int(opts["stride"]) if "stride" in opts else None
        channels = int(opts.get("channels", 3))
        if body == "patch-mean":
            return PatchMeanBackend(patch, stride, channels, attention="uniform")
        if body in ("patch-mean-center", "patch-mean+center-attention"):
            return PatchMeanBackend(
                patch, stride, channels,
                attention="center",
                center_sigma_frac=float(opts.get("sigma", 0.15)),
            )
        raise ValueError(f"unknown synthetic backend {body!r}")
    if kind == "precomputed":
        paths = body.split(",")
        if len(paths) != 2:
            raise ValueError("precomputed spec needs 'features.fmap,attention.fmap'")
        if "patch" not in opts:
            raise ValueError("precomputed spec needs patch=<P>")
        stride = int(opts["stride"]) if "stride" in opts else None
        return PrecomputedBackend(paths[0], paths[1], int(opts["patch"]), stride)
    if kind == "torchscript":
        if "patch" not in opts or "dim" not in opts:
            raise ValueError("torchscript spec needs patch=<P> and dim=<D>")
        working = int(opts["working"]) if "working" in opts else None
        return TorchscriptBackend(body, int(opts["patch"]), int(opts["dim"]), working)
    raise ValueError(f"unknown backend spec {spec!r}")
