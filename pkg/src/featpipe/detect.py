"""Downstream unsupervised tasks over a CAS map: connected components,
bounding boxes with the superbox rule, saliency masks, and the CorLoc /
IoU / mIoU metrics."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from featpipe.cas import CasMap

_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class Box:
    """Half-open pixel box [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def to_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class BoxRecord:
    box: Box
    class_id: int | None  # None for the superbox (it spans classes)
    component_area: int
    is_superbox: bool = False


@dataclass
class DetectionResult:
    boxes: list[BoxRecord]
    saliency: np.ndarray  # (H, W) bool


def label_components(mask: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Connected components of a binary mask, ids 1..n in raster-scan order
    of each component's first pixel."""
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labeled, n = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    if n == 0:
        return labeled.astype(np.int32), 0
    flat = labeled.ravel()
    first = np.full(n + 1, flat.size, dtype=np.int64)
    idx = np.flatnonzero(flat)
    # first occurrence per label id
    np.minimum.at(first, flat[idx], idx)
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[1 + order] = np.arange(1, n + 1, dtype=np.int32)
    return remap[labeled], n


def components(cas: CasMap, connectivity: int = 8) -> dict[int, tuple[np.ndarray, int]]:
    """Per-class connected components for every foreground class."""
    out: dict[int, tuple[np.ndarray, int]] = {}
    for cid in cas.foreground_ids():
        out[cid] = label_components(cas.labels == cid, connectivity)
    return out


def _tight_box(mask: np.ndarray) -> Box:
    ys, xs = np.nonzero(mask)
    return Box(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def saliency(cas: CasMap) -> np.ndarray:
    """Binary mask: union of all foreground classes."""
    fg = np.zeros(cas.labels.shape, dtype=bool)
    for cid in cas.foreground_ids():
        fg |= cas.labels == cid
    return fg


def boxes(
    cas: CasMap,
    min_area: int | None = None,
    connectivity: int = 8,
    mode: str = "multi",
) -> DetectionResult:
    """Boxes around foreground components, plus the superbox rule.

    The superbox bounds the largest connected component of the union of all
    foreground classes; if it overlaps any other retained box with IoU > 0.8
    it is dropped (the other box wins). ``mode='single'`` returns only the
    superbox; ``mode='multi'`` returns all component boxes with area >=
    ``min_area`` (default 0.1% of the image).
    """
    if mode not in ("single", "multi"):
        raise ValueError(f"mode must be 'single' or 'multi', got {mode!r}")
    h, w = cas.labels.shape
    if min_area is None:
        min_area = max(1, int(0.001 * h * w))

    sal = saliency(cas)
    sup_labeled, sup_n = label_components(sal, connectivity)
    superbox: BoxRecord | None = None
    if sup_n > 0:
        areas = np.bincount(sup_labeled.ravel(), minlength=sup_n + 1)[1:]
        largest = int(np.argmax(areas)) + 1
        superbox = BoxRecord(
            box=_tight_box(sup_labeled == largest),
            class_id=None,
            component_area=int(areas[largest - 1]),
            is_superbox=True,
        )

    if mode == "single":
        return DetectionResult(boxes=[superbox] if superbox else [], saliency=sal)

    records: list[BoxRecord] = []
    for cid, (labeled, n) in components(cas, connectivity).items():
        if n == 0:
            continue
        areas = np.bincount(labeled.ravel(), minlength=n + 1)[1:]
        for comp in range(1, n + 1):
            if areas[comp - 1] < min_area:
                continue
            records.append(
                BoxRecord(
                    box=_tight_box(labeled == comp),
                    class_id=cid,
                    component_area=int(areas[comp - 1]),
                )
            )

    if superbox and superbox.component_area >= min_area:
        drop = any(iou(superbox.box, r.box) > 0.8 for r in records)
        if not drop:
            records.append(superbox)
    return DetectionResult(boxes=records, saliency=sal)


def iou(a: Box | np.ndarray, b: Box | np.ndarray) -> float:
    """Intersection over union of two boxes or two binary masks."""
    if isinstance(a, Box) and isinstance(b, Box):
        ix = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
        iy = max(0, min(a.y1, b.y1) - max(a.y0, b.y0))
        inter = ix * iy
        union = a.area + b.area - inter
        return inter / union if union else 0.0
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        if a.shape != b.shape:
            raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
        a = a.astype(bool)
        b = b.astype(bool)
        inter = int(np.logical_and(a, b).sum())
        union = int(np.logical_or(a, b).sum())
        if union == 0:
            warnings.warn("IoU of two empty masks defined as 0", stacklevel=2)
            return 0.0
        return inter / union
    raise TypeError(f"iou needs two boxes or two masks, got {type(a)} and {type(b)}")


def corloc(
    predictions: dict[str, list[Box]], ground_truth: dict[str, list[Box]]
) -> float:
    """Fraction of images where some predicted box exceeds 0.5 IoU (strictly)
    with some ground-truth box. Images without predictions count as misses."""
    missing = sorted(set(predictions) - set(ground_truth))
    if missing:
        raise ValueError(f"images missing ground truth: {missing}")
    if not ground_truth:
        raise ValueError("empty ground truth")
    hits = 0
    for image_id, gt_boxes in ground_truth.items():
        preds = predictions.get(image_id, [])
        if any(iou(p, g) > 0.5 for p in preds for g in gt_boxes):
            hits += 1
    return hits / len(ground_truth)


def miou(pred: np.ndarray, gt: np.ndarray, classes: list[int]) -> float:
    """Mean over ``classes`` of per-class mask IoU; classes absent from both
    rasters are skipped."""
    if not classes:
        raise ValueError("empty class list")
    if pred.shape != gt.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {gt.shape}")
    scores = []
    for c in classes:
        p = pred == c
        g = gt == c
        union = int(np.logical_or(p, g).sum())
        if union == 0:
            continue
        scores.append(int(np.logical_and(p, g).sum()) / union)
    if not scores:
        raise ValueError("none of the listed classes is present in either raster")
    return float(np.mean(scores))


class MiouAccumulator:
    """Dataset-level mIoU: per-class intersections/unions summed over images."""

    def __init__(self, classes: list[int]):
        if not classes:
            raise ValueError("empty class list")
        self.classes = list(classes)
        self._inter = {c: 0 for c in classes}
        self._union = {c: 0 for c in classes}

    def add(self, pred: np.ndarray, gt: np.ndarray) -> None:
        if pred.shape != gt.shape:
            raise ValueError(f"shapes differ: {pred.shape} vs {gt.shape}")
        for c in self.classes:
            p = pred == c
            g = gt == c
            self._inter[c] += int(np.logical_and(p, g).sum())
            self._union[c] += int(np.logical_or(p, g).sum())

    def value(self) -> float:
        scores = [self._inter[c] / self._union[c] for c in self.classes if self._union[c]]
        if not scores:
            raise ValueError("no listed class present in any scored image")
        return float(np.mean(scores))


def load_boxes_json(path: str | Path) -> tuple[str, list[Box]]:
    """Read the per-image ground-truth schema {"image": id, "boxes": [[x0,y0,x1,y1],...]}."""
    doc = json.loads(Path(path).read_text())
    return doc["image"], [Box(*[int(v) for v in b]) for b in doc["boxes"]]


def make_report(
    dataset: str,
    mode: str,
    metric_name: str,
    value: float,
    n_images: int,
    lam: float,
    seed: int,
    backend_descriptor: str,
) -> dict:
    return {
        "dataset": dataset,
        "mode": mode,
        metric_name: value,
        "n_images": n_images,
        "lambda": lam,
        "seed": seed,
        "backend": json.loads(backend_descriptor),
    }


def report_markdown(report: dict) -> str:
    metric = "corloc" if "corloc" in report else "miou"
    lines = [
        f"| dataset | mode | {metric} | images | lambda | seed | backend |",
        "| --- | --- | --- | --- | --- | --- | --- |",
        "| {dataset} | {mode} | {value:.4f} | {n} | {lam} | {seed} | {backend} |".format(
            dataset=report["dataset"],
            mode=report["mode"],
            value=report[metric],
            n=report["n_images"],
            lam=report["lambda"],
            seed=report["seed"],
            backend=report["backend"]["name"],
        ),
    ]
    return "\n".join(lines) + "\n"
