"""Exact, invertible image-plane transforms and the ensembles built from them.

Transforms act on ``H x W`` or ``H x W x K`` rasters. All supported kinds
(wrap shifts, flips, quarter-turn rotations and compositions thereof) are
pixel permutations, so round trips are bit-exact: ``apply(invert(t),
apply(t, r)) == r`` for any raster ``r``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TransformSpec",
    "TransformSet",
    "identity",
    "shift",
    "flip",
    "rotation",
    "compose",
    "apply",
    "invert",
    "standard_transform_set",
]

_KINDS = ("identity", "shift", "flip", "rotation", "compose")
_AXES = ("horizontal", "vertical")

# Moore = all 8 unit directions, von Neumann = the 4 axis-aligned ones.
MOORE_DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
VON_NEUMANN_DIRECTIONS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class TransformSpec:
    """One invertible raster transform.

    ``kind`` selects the payload fields: ``shift`` uses ``dx``/``dy`` (wrap
    boundary), ``flip`` uses ``axis``, ``rotation`` uses ``k`` quarter-turns,
    ``compose`` uses ``parts`` (applied left to right). Instances are frozen
    and hashable, so structural equality is value equality.
    """

    kind: str
    dx: int = 0
    dy: int = 0
    axis: str | None = None
    k: int = 0
    parts: tuple["TransformSpec", ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "flip" and self.axis not in _AXES:
            raise ValueError(f"flip axis must be one of {_AXES}, got {self.axis!r}")
        if self.kind == "rotation" and self.k not in (1, 2, 3):
            raise ValueError(f"rotation k must be in {{1,2,3}}, got {self.k}")
        if self.kind == "compose":
            for p in self.parts:
                if not isinstance(p, TransformSpec):
                    raise TypeError("compose parts must be TransformSpec")

    def to_record(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        if self.kind == "shift":
            return {"kind": "shift", "dx": self.dx, "dy": self.dy, "boundary": "wrap"}
        if self.kind == "flip":
            return {"kind": "flip", "axis": self.axis}
        if self.kind == "rotation":
            return {"kind": "rotation", "k": self.k}
        return {"kind": "compose", "parts": [p.to_record() for p in self.parts]}

    @staticmethod
    def from_record(rec: dict) -> "TransformSpec":
        kind = rec.get("kind")
        if kind == "identity":
            return identity()
        if kind == "shift":
            return shift(int(rec["dx"]), int(rec["dy"]))
        if kind == "flip":
            return flip(rec["axis"])
        if kind == "rotation":
            return rotation(int(rec["k"]))
        if kind == "compose":
            return compose(*(TransformSpec.from_record(p) for p in rec["parts"]))
        raise ValueError(f"unknown transform record {rec!r}")

    def __repr__(self) -> str:  # compact, for test diffs
        if self.kind == "identity":
            return "identity"
        if self.kind == "shift":
            return f"shift({self.dx},{self.dy})"
        if self.kind == "flip":
            return f"flip({self.axis[0]})"
        if self.kind == "rotation":
            return f"rot{self.k}"
        return "compose[" + ",".join(repr(p) for p in self.parts) + "]"


def identity() -> TransformSpec:
    return TransformSpec("identity")


def shift(dx: int, dy: int) -> TransformSpec:
    """Wrap-around (torus) pixel shift by ``dx`` columns and ``dy`` rows."""
    return TransformSpec("shift", dx=int(dx), dy=int(dy))


def flip(axis: str) -> TransformSpec:
    """Mirror flip; ``horizontal`` mirrors left-right, ``vertical`` top-bottom."""
    return TransformSpec("flip", axis=axis)


def rotation(k: int) -> TransformSpec:
    """Counter-clockwise rotation by ``k`` quarter turns, k in {1,2,3}."""
    return TransformSpec("rotation", k=int(k))


def compose(*parts: TransformSpec) -> TransformSpec:
    """Left-to-right composition; ``compose()`` behaves as identity."""
    return TransformSpec("compose", parts=tuple(parts))


def apply(t: TransformSpec, raster: np.ndarray) -> np.ndarray:
    """Apply ``t`` to a raster.

    Rasters are ``H x W`` or ``H x W x K``; odd rotations of a non-square
    raster return ``W x H (x K)``. Shifts use wrap boundary, so every kind is
    a pure pixel permutation.
    """
    raster = np.asarray(raster)
    if raster.ndim not in (2, 3) or raster.size == 0:
        raise ValueError(f"raster must be a non-empty HxW or HxWxK array, got shape {raster.shape}")
    if t.kind == "identity":
        return raster
    if t.kind == "shift":
        h, w = raster.shape[:2]
        if abs(t.dx) >= w or abs(t.dy) >= h:
            raise ValueError(
                f"shift ({t.dx},{t.dy}) too large for raster of shape {raster.shape[:2]}"
            )
        return np.roll(raster, (t.dy, t.dx), axis=(0, 1))
    if t.kind == "flip":
        return np.flip(raster, axis=1 if t.axis == "horizontal" else 0)
    if t.kind == "rotation":
        return np.rot90(raster, k=t.k, axes=(0, 1))
    out = raster
    for part in t.parts:
        out = apply(part, out)
    return out


def invert(t: TransformSpec) -> TransformSpec:
    """Exact inverse: ``apply(invert(t), apply(t, r)) == r`` bit-exactly."""
    if t.kind == "identity":
        return t
    if t.kind == "shift":
        return shift(-t.dx, -t.dy)
    if t.kind == "flip":
        return t
    if t.kind == "rotation":
        return rotation(4 - t.k)
    return compose(*(invert(p) for p in reversed(t.parts)))


def output_shape(t: TransformSpec, height: int, width: int) -> tuple[int, int]:
    """Spatial shape of ``apply(t, raster)`` for an ``height x width`` raster."""
    if t.kind == "rotation" and t.k % 2 == 1:
        return width, height
    if t.kind == "compose":
        h, w = height, width
        for p in t.parts:
            h, w = output_shape(p, h, w)
        return h, w
    return height, width


def _flip_variants(flips: bool) -> tuple[tuple[str, ...], ...]:
    if not flips:
        return ((),)
    return ((), ("horizontal",), ("vertical",), ("horizontal", "vertical"))


@dataclass(frozen=True)
class TransformSet:
    """Ordered, duplicate-free set of transforms; identity is element 0.

    Generated sets keep their generating parameters so they serialize
    compactly; explicitly added transforms live in ``extra``.
    """

    transforms: tuple[TransformSpec, ...]
    stride: int | None = None
    neighborhood: str | None = None
    distances: tuple[int, ...] = ()
    flips: bool = False
    extra: tuple[TransformSpec, ...] = ()

    def __post_init__(self) -> None:
        if not self.transforms or self.transforms[0] != identity():
            raise ValueError("transform set must start with the identity")
        if len(set(self.transforms)) != len(self.transforms):
            raise ValueError("transform set contains duplicate transforms")

    def __len__(self) -> int:
        return len(self.transforms)

    def __iter__(self):
        return iter(self.transforms)

    @staticmethod
    def from_transforms(transforms: Iterable[TransformSpec]) -> "TransformSet":
        """Build a custom set; identity is prepended, duplicates dropped."""
        seen: dict[TransformSpec, None] = {identity(): None}
        for t in transforms:
            seen.setdefault(t, None)
        ts = tuple(seen.keys())
        return TransformSet(transforms=ts, extra=ts[1:])

    @staticmethod
    def identity_only() -> "TransformSet":
        return TransformSet(transforms=(identity(),))

    def to_json(self) -> str:
        doc = {
            "stride": self.stride,
            "neighborhood": self.neighborhood,
            "distances": list(self.distances),
            "flips": self.flips,
            "extra": [t.to_record() for t in self.extra],
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "TransformSet":
        doc = json.loads(text)
        extra = tuple(TransformSpec.from_record(r) for r in doc.get("extra", ()))
        if doc.get("stride") is None:
            return TransformSet.from_transforms(extra)
        base = standard_transform_set(
            stride=int(doc["stride"]),
            neighborhood=doc["neighborhood"],
            distances=[int(d) for d in doc["distances"]],
            flips=bool(doc["flips"]),
        )
        if not extra:
            return base
        merged: dict[TransformSpec, None] = dict.fromkeys(base.transforms)
        for t in extra:
            merged.setdefault(t, None)
        return TransformSet(
            transforms=tuple(merged.keys()),
            stride=base.stride,
            neighborhood=base.neighborhood,
            distances=base.distances,
            flips=base.flips,
            extra=extra,
        )


def standard_transform_set(
    stride: int,
    neighborhood: str = "moore",
    distances: Sequence[int] | None = None,
    flips: bool = True,
) -> TransformSet:
    """Generate the shift/flip ensemble for a model with effective stride S.

    Emits one transform per (flip variant x direction x distance): the flip
    (none/horizontal/vertical/both) followed by a wrap shift of ``distance``
    pixels along the direction. With a Moore neighborhood, flips on and
    distances 1..S/2 this is ``4 * 8 * S/2`` non-identity transforms (64 for
    S=4); the identity is always prepended.

    Distances outside [1, S/2] are accepted with a warning: larger shifts add
    cost for little, if any, gain.
    """
    if neighborhood not in ("moore", "von_neumann"):
        raise ValueError(f"neighborhood must be 'moore' or 'von_neumann', got {neighborhood!r}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if distances is None:
        distances = list(range(1, stride // 2 + 1))
    distances = [int(d) for d in distances]
    out_of_range = [d for d in distances if not 1 <= d <= stride / 2]
    if out_of_range:
        warnings.warn(
            f"shift distances {out_of_range} are outside [1, {stride / 2:g}] "
            f"for stride {stride}; they are kept but rarely help",
            stacklevel=2,
        )
    dirs = MOORE_DIRECTIONS if neighborhood == "moore" else VON_NEUMANN_DIRECTIONS

    transforms: list[TransformSpec] = [identity()]
    for axes in _flip_variants(flips):
        for d in distances:
            for ux, uy in dirs:
                s = shift(ux * d, uy * d)
                if axes:
                    transforms.append(compose(*(flip(a) for a in axes), s))
                else:
                    transforms.append(s)
    # degenerate distances (0, mirrored negatives) can collide; keep first
    transforms = list(dict.fromkeys(transforms))
    return TransformSet(
        transforms=tuple(transforms),
        stride=stride,
        neighborhood=neighborhood,
        distances=tuple(distances),
        flips=flips,
    )
