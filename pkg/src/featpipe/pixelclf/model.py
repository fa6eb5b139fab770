"""Pixel classifiers: training, prediction, feature recipes and archives.

A classifier is bound to the feature recipe it was trained on via a
checksum; predicting with mismatched features is a hard error rather than a
silent quality drop.
"""

from __future__ import annotations

import hashlib
import io
import json
import pickle
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from featpipe.pixelclf.classical import ClassicalFeatureStack, FilterRecipe
from featpipe.pixelclf.forest import fit_forest
from featpipe.pixelclf.logistic import LogisticFit, fit_logistic, predict_proba

_MAGIC = b"FPCL"


@dataclass(frozen=True)
class FeatureRecipe:
    """Which feature sources feed the classifier, and their parameters."""

    sources: tuple[str, ...]  # subset of ("deep", "classical"), deep first
    backend: str | None = None  # BackendDescriptor JSON
    transform_set: str | None = None  # TransformSet JSON
    include_attention: bool = False
    classical: str | None = None  # FilterRecipe JSON

    def __post_init__(self) -> None:
        for s in self.sources:
            if s not in ("deep", "classical"):
                raise ValueError(f"unknown feature source {s!r}")
        if not self.sources:
            raise ValueError("recipe needs at least one feature source")
        if "deep" in self.sources and self.backend is None:
            raise ValueError("deep source needs a backend descriptor")
        if "classical" in self.sources and self.classical is None:
            raise ValueError("classical source needs a filter recipe")

    def to_json(self) -> str:
        return json.dumps(
            {
                "sources": list(self.sources),
                "backend": self.backend,
                "transform_set": self.transform_set,
                "include_attention": self.include_attention,
                "classical": self.classical,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "FeatureRecipe":
        doc = json.loads(text)
        return FeatureRecipe(
            sources=tuple(doc["sources"]),
            backend=doc.get("backend"),
            transform_set=doc.get("transform_set"),
            include_attention=bool(doc.get("include_attention", False)),
            classical=doc.get("classical"),
        )

    def checksum(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def channel_names(self) -> list[str] | None:
        """Channel layout, used to name offending channels in errors."""
        names: list[str] = []
        if "deep" in self.sources:
            if self.backend is None:
                return None
            dim = json.loads(self.backend)["hidden_dim"]
            names += [f"deep[{j}]" for j in range(dim)]
            if self.include_attention:
                names.append("attention")
        if "classical" in self.sources:
            if self.classical is None:
                return None
            names += [f"classical:{n}" for n in FilterRecipe.from_json(self.classical).channel_names()]
        return names


@dataclass
class PixelClassifier:
    kind: str  # "logistic" | "random_forest"
    classes: np.ndarray  # original label values, ascending
    recipe_json: str
    recipe_checksum: str
    seed: int
    hyper: dict
    logistic: LogisticFit | None = None
    forest: Any = None

    @property
    def n_classes(self) -> int:
        return int(self.classes.size)


def _flatten(features: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    features = np.asarray(features)
    if features.ndim == 3:
        h, w, d = features.shape
        return features.reshape(h * w, d), (h, w)
    if features.ndim == 2:
        return features, (features.shape[0],)
    raise ValueError(f"features must be (H,W,D) or (N,D), got shape {features.shape}")


def _check_finite(x: np.ndarray, recipe: FeatureRecipe | None) -> None:
    bad = ~np.isfinite(x)
    if not bad.any():
        return
    cols = sorted(set(np.nonzero(bad)[1].tolist()))
    names = recipe.channel_names() if recipe is not None else None
    labels = [names[c] if names and c < len(names) else f"feature[{c}]" for c in cols]
    raise ValueError(f"non-finite feature values in channels: {', '.join(labels)}")


def train(
    features: np.ndarray,
    labels: np.ndarray,
    kind: str = "logistic",
    recipe: FeatureRecipe | None = None,
    seed: int = 0,
    c_reg: float = 1.0,
    tol: float = 1e-4,
    max_iter: int = 500,
    n_trees: int = 100,
) -> PixelClassifier:
    """Train on the labeled pixels (label 0 = unlabeled).

    ``features`` is (H, W, D) with (H, W) labels, or pre-flattened (N, D)
    with (N,) labels.
    """
    if kind not in ("logistic", "random_forest"):
        raise ValueError(f"kind must be 'logistic' or 'random_forest', got {kind!r}")
    x, _ = _flatten(features)
    y = np.asarray(labels).ravel()
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"{y.shape[0]} labels for {x.shape[0]} feature rows")
    mask = y > 0
    x, y = x[mask], y[mask]
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need >=2 classes to train a classifier")
    _check_finite(x, recipe)

    recipe_json = recipe.to_json() if recipe else ""
    checksum = recipe.checksum() if recipe else ""
    if kind == "logistic":
        fit = fit_logistic(x, y, c_reg=c_reg, tol=tol, max_iter=max_iter)
        return PixelClassifier(
            kind=kind,
            classes=fit.classes,
            recipe_json=recipe_json,
            recipe_checksum=checksum,
            seed=seed,
            hyper={"c_reg": c_reg, "tol": tol, "max_iter": max_iter,
                   "n_iter": fit.n_iter, "converged": fit.converged},
            logistic=fit,
        )
    forest = fit_forest(x, y, seed=seed, n_trees=n_trees)
    return PixelClassifier(
        kind=kind,
        classes=np.asarray(forest.classes_),
        recipe_json=recipe_json,
        recipe_checksum=checksum,
        seed=seed,
        hyper={"n_trees": n_trees},
        forest=forest,
    )


def predict(
    clf: PixelClassifier,
    features: np.ndarray,
    recipe: FeatureRecipe | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Labels (argmax, lowest class id on ties) and per-class probabilities.

    When ``recipe`` is given its checksum must match the training recipe.
    """
    if recipe is not None and recipe.checksum() != clf.recipe_checksum:
        raise ValueError(
            "feature recipe mismatch:\n"
            f"  classifier: {clf.recipe_json or '<none>'}\n"
            f"  supplied:   {recipe.to_json()}"
        )
    x, spatial = _flatten(features)
    _check_finite(x, recipe)
    if clf.kind == "logistic":
        assert clf.logistic is not None
        probs = predict_proba(clf.logistic, x)
    else:
        probs = clf.forest.predict_proba(x)
    idx = np.argmax(probs, axis=1)
    labels = clf.classes[idx]
    return labels.reshape(spatial), probs.reshape(*spatial, clf.n_classes)


def hybrid_stack(deep: np.ndarray, classical: ClassicalFeatureStack | np.ndarray) -> np.ndarray:
    """Concatenate deep and classical channels per pixel, deep first."""
    cdata = classical.data if isinstance(classical, ClassicalFeatureStack) else classical
    deep = np.asarray(deep)
    if deep.shape[:2] != cdata.shape[:2]:
        raise ValueError(f"spatial shapes differ: deep {deep.shape[:2]} vs classical {cdata.shape[:2]}")
    return np.concatenate([deep.astype(np.float32), cdata.astype(np.float32)], axis=2)


def save_classifier(clf: PixelClassifier, path: str | Path) -> None:
    """Archive: magic | u32 header length | header JSON | binary payload."""
    header = {
        "kind": clf.kind,
        "recipe_checksum": clf.recipe_checksum,
        "recipe": clf.recipe_json,
        "classes": np.asarray(clf.classes).tolist(),
        "seed": clf.seed,
        "hyperparameters": clf.hyper,
    }
    if clf.kind == "logistic":
        assert clf.logistic is not None
        buf = io.BytesIO()
        np.savez(
            buf,
            weights=clf.logistic.weights,
            bias=clf.logistic.bias,
            mean=clf.logistic.mean,
            scale=clf.logistic.scale,
            classes=clf.logistic.classes,
        )
        payload = buf.getvalue()
        header["logistic"] = {
            "c_reg": clf.logistic.c_reg,
            "n_iter": clf.logistic.n_iter,
            "converged": clf.logistic.converged,
            "grad_norm": clf.logistic.grad_norm,
        }
    else:
        payload = pickle.dumps(clf.forest)
    head = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(payload)
    tmp.replace(path)


def load_classifier(path: str | Path) -> PixelClassifier:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a classifier archive")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    header = json.loads(raw[8 : 8 + hlen].decode())
    payload = raw[8 + hlen :]
    classes = np.asarray(header["classes"])
    if header["kind"] == "logistic":
        arrays = np.load(io.BytesIO(payload))
        meta = header["logistic"]
        fit = LogisticFit(
            weights=arrays["weights"],
            bias=arrays["bias"],
            mean=arrays["mean"],
            scale=arrays["scale"],
            classes=arrays["classes"],
            c_reg=meta["c_reg"],
            n_iter=meta["n_iter"],
            converged=meta["converged"],
            grad_norm=meta["grad_norm"],
        )
        return PixelClassifier(
            kind="logistic",
            classes=classes,
            recipe_json=header["recipe"],
            recipe_checksum=header["recipe_checksum"],
            seed=header["seed"],
            hyper=header["hyperparameters"],
            logistic=fit,
        )
    return PixelClassifier(
        kind="random_forest",
        classes=classes,
        recipe_json=header["recipe"],
        recipe_checksum=header["recipe_checksum"],
        seed=header["seed"],
        hyper=header["hyperparameters"],
        forest=pickle.loads(payload),
    )
