"""Brush-stroke rasterization, the server side of the shared stamp rule.

The browser client implements the identical rule so both sides produce the
same pixel set for a stroke: sample each segment every 0.5 px, snap each
sample to the pixel grid with round-half-up (floor(v + 0.5)), then stamp an
integer disc of the given radius (dx^2 + dy^2 <= r^2), clipped to bounds.
All arithmetic is exact in float64, so the two implementations agree
bit-for-bit.
"""

from __future__ import annotations

import math

import numpy as np

STEP = 0.5


def _snap(v: float) -> int:
    return math.floor(v + 0.5)


def stroke_pixels(
    points: list[tuple[float, float]], radius: int, width: int, height: int
) -> list[tuple[int, int]]:
    """Pixels covered by a polyline stroke, sorted row-major.

    ``points`` are (x, y) in pixel coordinates; a single point stamps one
    disc. Pixels outside the image are clipped away.
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    if not points:
        return []
    centers: list[tuple[int, int]] = [(_snap(points[0][0]), _snap(points[0][1]))]
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        dist = math.hypot(x1 - x0, y1 - y0)
        n = max(1, math.ceil(dist / STEP))
        for i in range(1, n + 1):
            t = i / n
            centers.append((_snap(x0 + (x1 - x0) * t), _snap(y0 + (y1 - y0) * t)))

    r2 = radius * radius
    seen: set[tuple[int, int]] = set()
    for cx, cy in centers:
        for dy in range(-radius, radius + 1):
            yy = cy + dy
            if yy < 0 or yy >= height:
                continue
            for dx in range(-radius, radius + 1):
                xx = cx + dx
                if xx < 0 or xx >= width:
                    continue
                if dx * dx + dy * dy <= r2:
                    seen.add((xx, yy))
    return sorted(seen, key=lambda p: (p[1], p[0]))


def pixels_to_runs(pixels: list[tuple[int, int]]) -> list[list[int]]:
    """Row-major pixels -> run-length triples [row, start, length]."""
    runs: list[list[int]] = []
    for x, y in pixels:
        if runs and runs[-1][0] == y and runs[-1][1] + runs[-1][2] == x:
            runs[-1][2] += 1
        else:
            runs.append([y, x, 1])
    return runs


def runs_to_mask(
    runs_by_class: dict[int, list[list[int]]], width: int, height: int
) -> np.ndarray:
    """Run-length label patches -> (H, W) label raster (0 = unlabeled).

    Class keys are applied in ascending order; overlaps resolve to the class
    painted last, which the client encodes by submitting final merged runs.
    """
    mask = np.zeros((height, width), dtype=np.int32)
    for class_id in sorted(runs_by_class):
        if class_id < 1:
            raise ValueError(f"class ids must be >= 1, got {class_id}")
        for row, start, length in runs_by_class[class_id]:
            if not (0 <= row < height and 0 <= start and start + length <= width and length > 0):
                raise ValueError(f"run {[row, start, length]} out of bounds for {width}x{height}")
            mask[row, start : start + length] = class_id
    return mask


def mask_to_runs(mask: np.ndarray) -> dict[int, list[list[int]]]:
    """Label raster -> per-class run-length triples, the upload wire format."""
    out: dict[int, list[list[int]]] = {}
    for class_id in np.unique(mask):
        if class_id == 0:
            continue
        ys, xs = np.nonzero(mask == class_id)
        pixels = sorted(zip(xs.tolist(), ys.tolist()), key=lambda p: (p[1], p[0]))
        out[int(class_id)] = pixels_to_runs(pixels)
    return out
