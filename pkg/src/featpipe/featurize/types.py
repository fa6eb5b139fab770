"""Core data types for featurization: backend descriptors and dense maps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np


@dataclass(frozen=True)
class BackendDescriptor:
    """Identity and geometry of a patch featurizer.

    ``patch_size`` is the receptive window P, ``stride`` the embedding step S
    (S < P means overlapping patches), ``hidden_dim`` the feature width D.
    ``multiple_of`` declares the input divisibility constraint and
    ``working_size`` the preferred square working resolution, both consumed
    by ``store.conform``.
    """

    name: str
    patch_size: int
    stride: int
    hidden_dim: int
    multiple_of: int = 1
    working_size: int | None = None

    def patch_grid(self, height: int, width: int) -> tuple[int, int]:
        """Patch-grid shape for an H x W input: floor((dim - P)/S) + 1."""
        hp = (height - self.patch_size) // self.stride + 1
        wp = (width - self.patch_size) // self.stride + 1
        if hp < 1 or wp < 1:
            raise ValueError(
                f"image {height}x{width} smaller than patch size {self.patch_size}"
            )
        return hp, wp

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "patch_size": self.patch_size,
                "stride": self.stride,
                "hidden_dim": self.hidden_dim,
                "multiple_of": self.multiple_of,
                "working_size": self.working_size,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "BackendDescriptor":
        doc = json.loads(text)
        return BackendDescriptor(
            name=doc["name"],
            patch_size=int(doc["patch_size"]),
            stride=int(doc["stride"]),
            hidden_dim=int(doc["hidden_dim"]),
            multiple_of=int(doc.get("multiple_of", 1)),
            working_size=doc.get("working_size"),
        )


@runtime_checkable
class FeaturizerBackend(Protocol):
    """A patch featurizer: image -> (patch features, patch attention).

    ``featurize`` returns ``(hp, wp, D)`` float features and an ``(hp, wp)``
    non-negative attention map for the grid implied by the descriptor.
    Backends must be deterministic and safe for concurrent read-only use.
    """

    descriptor: BackendDescriptor

    def featurize(self, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


def _check_spatial(data: np.ndarray, ndim: int, what: str) -> np.ndarray:
    data = np.asarray(data)
    if data.ndim != ndim:
        raise ValueError(f"{what} must be {ndim}-d, got shape {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError(f"{what} contains non-finite values")
    return data


@dataclass
class FeatureMap:
    """Dense per-pixel features: ``H x W x D`` float raster plus provenance."""

    data: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = _check_spatial(self.data, 3, "feature map")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]


@dataclass
class AttentionMap:
    """Dense per-pixel attention: ``H x W`` non-negative float raster."""

    data: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = _check_spatial(self.data, 2, "attention map")
        if (self.data < 0).any():
            raise ValueError("attention map has negative values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]
