"""Unsupervised class-agnostic segmentation.

Pipeline: k-means over per-pixel features, an attention-density
foreground/background split, a modal "semantic distance" between foreground
and background centroids, and complete-linkage merging of clusters below a
scaled multiple of that distance.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from featpipe._kernels import assign_nearest
from featpipe.featurize.types import AttentionMap, FeatureMap

DEFAULT_CLUSTERS = 80
DISTANCE_BINS = 64
DISTANCE_RANGE = 2.0  # cosine distance lives in [0, 2]


@dataclass
class ClusterModel:
    """k-means result over a feature map's pixels."""

    centroids: np.ndarray  # (C, D) float64
    assignment: np.ndarray  # (H, W) int32
    inertia: float
    seed: int
    n_iter: int
    converged: bool
    inertia_history: list[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass
class ClusterStats:
    """Per-cluster attention bookkeeping and the foreground split."""

    area: np.ndarray  # (C,) int64 pixels
    attention_mass: np.ndarray  # (C,) float64
    rho: np.ndarray  # (C,) float64, attention per unit area
    foreground: np.ndarray  # (C,) bool


@dataclass(frozen=True)
class CasClass:
    id: int
    area: int
    attention_mass: float
    rho_a: float
    foreground: bool


@dataclass
class CasMap:
    """Class-agnostic segmentation: contiguous class ids sorted by area."""

    labels: np.ndarray  # (H, W) int32
    classes: tuple[CasClass, ...]
    d_sem: float
    lam: float
    seed: int
    degenerate_split: bool = False

    def foreground_ids(self) -> list[int]:
        return [c.id for c in self.classes if c.foreground]


def _farthest_point_seeds(unique: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Greedy farthest-point seeding over the distinct feature vectors."""
    rng = np.random.default_rng(seed)
    n = unique.shape[0]
    seeds = np.empty(k, dtype=np.int64)
    seeds[0] = rng.integers(n)
    mind = np.einsum("nd,nd->n", unique - unique[seeds[0]], unique - unique[seeds[0]])
    for i in range(1, k):
        seeds[i] = int(np.argmax(mind))
        diff = unique - unique[seeds[i]]
        np.minimum(mind, np.einsum("nd,nd->n", diff, diff), out=mind)
    return seeds


def kmeans(
    fm: FeatureMap | np.ndarray,
    n_clusters: int = DEFAULT_CLUSTERS,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> ClusterModel:
    """Lloyd's algorithm with farthest-point seeding, deterministic per seed.

    Stops when the relative inertia improvement drops below ``tol`` or after
    ``max_iter`` iterations. Empty clusters are reseeded from the point
    farthest from its centroid. If the input has fewer distinct vectors than
    ``n_clusters``, the effective cluster count collapses to that number.
    """
    data = fm.data if isinstance(fm, FeatureMap) else np.asarray(fm)
    h, w, d = data.shape
    x = np.ascontiguousarray(data.reshape(-1, d), dtype=np.float64)
    n = x.shape[0]
    if n < n_clusters:
        raise ValueError(f"{n} pixels cannot support {n_clusters} clusters")

    unique = np.unique(x, axis=0)
    k = min(n_clusters, unique.shape[0])
    if k < n_clusters:
        warnings.warn(
            f"only {unique.shape[0]} distinct feature vectors; "
            f"collapsing {n_clusters} -> {k} clusters",
            stacklevel=2,
        )
    centroids = unique[_farthest_point_seeds(unique, k, seed)].copy()

    history: list[float] = []
    labels = np.zeros(n, dtype=np.int32)
    prev = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        labels, sqd = assign_nearest(x, centroids)
        inertia = float(sqd.sum())
        history.append(inertia)
        if np.isfinite(prev) and prev - inertia <= tol * prev:
            converged = True
            break
        prev = inertia

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros((k, d), dtype=np.float64)
        for j in range(d):
            sums[:, j] = np.bincount(labels, weights=x[:, j], minlength=k)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            # Reseed each empty cluster from the currently farthest point.
            order = np.argsort(sqd)[::-1]
            for rank, c in enumerate(np.flatnonzero(~nonempty)):
                centroids[c] = x[order[rank % n]]
    else:
        labels, sqd = assign_nearest(x, centroids)
        inertia = float(sqd.sum())
        history.append(inertia)

    # The final assignment can leave clusters empty; drop and compact them.
    counts = np.bincount(labels, minlength=centroids.shape[0])
    if (counts == 0).any():
        keep = np.flatnonzero(counts > 0)
        remap = np.full(centroids.shape[0], -1, dtype=np.int32)
        remap[keep] = np.arange(keep.size, dtype=np.int32)
        labels = remap[labels]
        centroids = centroids[keep]

    return ClusterModel(
        centroids=centroids,
        assignment=labels.reshape(h, w),
        inertia=history[-1],
        seed=seed,
        n_iter=it,
        converged=converged,
        inertia_history=history,
    )


def attention_density(model: ClusterModel, attn: AttentionMap) -> ClusterStats:
    """Attention per unit area for each cluster, plus the foreground split.

    A cluster is foreground when its density strictly exceeds the mean
    density over clusters; if none does (uniform attention), the single
    densest cluster (lowest id on ties) is foreground.
    """
    a = np.asarray(attn.data, dtype=np.float64)
    if a.shape != model.assignment.shape:
        raise ValueError(
            f"attention shape {a.shape} != assignment shape {model.assignment.shape}"
        )
    total = a.sum()
    if total <= 0:
        raise ValueError("attention not normalized (total attention is zero)")
    flat = model.assignment.ravel()
    k = model.n_clusters
    area = np.bincount(flat, minlength=k).astype(np.int64)
    mass = np.bincount(flat, weights=a.ravel(), minlength=k)
    if (area == 0).any():
        raise ValueError("cluster model has empty clusters")
    rho = mass / area
    foreground = rho > rho.mean()
    if not foreground.any():
        foreground[int(np.argmax(rho))] = True
    return ClusterStats(area=area, attention_mass=mass, rho=rho, foreground=foreground)


def _cosine_distance_matrix(centroids: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(centroids, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    unit = centroids / safe[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    cos[norms == 0, :] = 0.0
    cos[:, norms == 0] = 0.0
    return 1.0 - cos


def semantic_distance(model: ClusterModel, stats: ClusterStats) -> tuple[float, bool]:
    """Modal cosine distance between foreground and background centroids.

    Distances are binned into 64 equal bins over [0, 2]; the result is the
    center of the most populated bin, ties toward the lower bin. With no
    background clusters the split is degenerate and the median pairwise
    centroid distance is returned instead; the flag reports that case.
    """
    dist = _cosine_distance_matrix(model.centroids)
    fg = np.flatnonzero(stats.foreground)
    bg = np.flatnonzero(~stats.foreground)
    if bg.size == 0:
        pairs = dist[np.triu_indices(model.n_clusters, k=1)]
        if pairs.size == 0:
            return 0.0, True
        warnings.warn("no background clusters; semantic distance from median pairwise distance",
                      stacklevel=2)
        return float(np.median(pairs)), True
    values = dist[np.ix_(fg, bg)].ravel()
    width = DISTANCE_RANGE / DISTANCE_BINS
    bins = np.minimum((values / width).astype(np.int64), DISTANCE_BINS - 1)
    counts = np.bincount(bins, minlength=DISTANCE_BINS)
    modal = int(np.argmax(counts))
    return float((modal + 0.5) * width), False


def _complete_linkage_groups(dist: np.ndarray, threshold: float) -> np.ndarray:
    """Agglomerate with complete linkage while the closest pair is <= threshold.

    Returns a group id per input element. O(C^3), fine for C <= a few hundred.
    """
    c = dist.shape[0]
    d = dist.astype(np.float64).copy()
    np.fill_diagonal(d, np.inf)
    alive = list(range(c))
    members: dict[int, list[int]] = {i: [i] for i in range(c)}
    while len(alive) > 1:
        sub = d[np.ix_(alive, alive)]
        flat = int(np.argmin(sub))
        i, j = divmod(flat, len(alive))
        if sub[i, j] > threshold:
            break
        a, b = alive[min(i, j)], alive[max(i, j)]
        # Complete linkage: distance to the merged group is the max leg.
        for other in alive:
            if other in (a, b):
                continue
            d[a, other] = d[other, a] = max(d[a, other], d[b, other])
        members[a].extend(members.pop(b))
        alive.remove(b)
    groups = np.empty(c, dtype=np.int64)
    for gid, root in enumerate(sorted(members)):
        for m in members[root]:
            groups[m] = gid
    return groups


def merge(
    model: ClusterModel,
    attn: AttentionMap,
    d_sem: float,
    lam: float = 1.0,
    degenerate_split: bool = False,
) -> CasMap:
    """Merge clusters whose complete-linkage cosine distance is <= lam * d_sem.

    Foreground flags are recomputed on the merged classes with the same
    density-above-mean rule. Class ids are contiguous, sorted by descending
    area.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    dist = _cosine_distance_matrix(model.centroids)
    groups = _complete_linkage_groups(dist, lam * d_sem)

    labels = groups[model.assignment].astype(np.int32)
    a = np.asarray(attn.data, dtype=np.float64)
    n_groups = int(groups.max()) + 1
    area = np.bincount(labels.ravel(), minlength=n_groups).astype(np.int64)
    mass = np.bincount(labels.ravel(), weights=a.ravel(), minlength=n_groups)
    rho = np.divide(mass, area, out=np.zeros_like(mass), where=area > 0)

    present = np.flatnonzero(area > 0)
    order = present[np.argsort(-area[present], kind="stable")]
    remap = np.full(n_groups, -1, dtype=np.int32)
    remap[order] = np.arange(order.size, dtype=np.int32)
    labels = remap[labels]

    area = area[order]
    mass = mass[order]
    rho = rho[order]
    foreground = rho > rho.mean()
    if not foreground.any():
        foreground[int(np.argmax(rho))] = True

    classes = tuple(
        CasClass(
            id=i,
            area=int(area[i]),
            attention_mass=float(mass[i]),
            rho_a=float(rho[i]),
            foreground=bool(foreground[i]),
        )
        for i in range(order.size)
    )
    return CasMap(
        labels=labels,
        classes=classes,
        d_sem=float(d_sem),
        lam=float(lam),
        seed=model.seed,
        degenerate_split=degenerate_split,
    )


def segment(
    fm: FeatureMap,
    attn: AttentionMap,
    n_clusters: int = DEFAULT_CLUSTERS,
    seed: int = 0,
    lam: float = 1.0,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> CasMap:
    """Full pipeline: cluster, split by attention density, estimate the
    semantic distance, merge."""
    model = kmeans(fm, n_clusters=n_clusters, seed=seed, max_iter=max_iter, tol=tol)
    stats = attention_density(model, attn)
    d_sem, degenerate = semantic_distance(model, stats)
    return merge(model, attn, d_sem, lam=lam, degenerate_split=degenerate)


def save_cas(cas: CasMap, png_path: str | Path, json_path: str | Path | None = None) -> None:
    """Write the class raster as an indexed PNG plus a JSON sidecar."""
    from PIL import Image

    png_path = Path(png_path)
    if len(cas.classes) > 256:
        raise ValueError(f"{len(cas.classes)} classes exceed palette capacity (256)")
    img = Image.fromarray(cas.labels.astype(np.uint8), mode="P")
    rng = np.random.default_rng(7)
    palette = rng.integers(0, 256, size=(256, 3), dtype=np.uint8)
    palette[0] = (20, 20, 20)
    img.putpalette(palette.ravel().tolist())
    tmp = png_path.with_suffix(png_path.suffix + ".tmp")
    img.save(tmp, format="PNG")
    tmp.replace(png_path)

    sidecar = {
        "classes": [
            {
                "id": c.id,
                "area": c.area,
                "attention_mass": c.attention_mass,
                "rho_A": c.rho_a,
                "foreground": c.foreground,
            }
            for c in cas.classes
        ],
        "d_sem": cas.d_sem,
        "lambda": cas.lam,
        "seed": cas.seed,
        "degenerate_split": cas.degenerate_split,
    }
    jp = Path(json_path) if json_path else png_path.with_suffix(".json")
    tmp = jp.with_suffix(jp.suffix + ".tmp")
    tmp.write_text(json.dumps(sidecar, indent=2))
    tmp.replace(jp)


def load_cas(png_path: str | Path, json_path: str | Path | None = None) -> CasMap:
    from PIL import Image

    png_path = Path(png_path)
    jp = Path(json_path) if json_path else png_path.with_suffix(".json")
    labels = np.asarray(Image.open(png_path)).astype(np.int32)
    doc = json.loads(jp.read_text())
    classes = tuple(
        CasClass(
            id=int(c["id"]),
            area=int(c["area"]),
            attention_mass=float(c["attention_mass"]),
            rho_a=float(c["rho_A"]),
            foreground=bool(c["foreground"]),
        )
        for c in doc["classes"]
    )
    return CasMap(
        labels=labels,
        classes=classes,
        d_sem=float(doc["d_sem"]),
        lam=float(doc["lambda"]),
        seed=int(doc["seed"]),
        degenerate_split=bool(doc.get("degenerate_split", False)),
    )
