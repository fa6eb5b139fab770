"""Assemble per-pixel feature stacks from a recipe (deep, classical, hybrid)."""

from __future__ import annotations

import numpy as np

from featpipe import geometry
from featpipe.featurize import FeaturizerBackend, upsample
from featpipe.pixelclf.classical import FilterRecipe, classical_features
from featpipe.pixelclf.model import FeatureRecipe


def make_recipe(
    sources: tuple[str, ...],
    backend: FeaturizerBackend | None = None,
    transform_set: geometry.TransformSet | None = None,
    include_attention: bool = False,
    filter_recipe: FilterRecipe | None = None,
) -> FeatureRecipe:
    """Build a FeatureRecipe from live objects."""
    if "deep" in sources and backend is None:
        raise ValueError("deep source needs a backend")
    if "classical" in sources and filter_recipe is None:
        filter_recipe = FilterRecipe()
    return FeatureRecipe(
        sources=tuple(sources),
        backend=backend.descriptor.to_json() if backend else None,
        transform_set=(transform_set or geometry.TransformSet.identity_only()).to_json()
        if "deep" in sources
        else None,
        include_attention=include_attention,
        classical=filter_recipe.to_json() if "classical" in sources else None,
    )


def build_feature_stack(
    image: np.ndarray,
    recipe: FeatureRecipe,
    backend: FeaturizerBackend | None = None,
    cache=None,
    image_id: str | None = None,
    mode: str = "sequential",
) -> np.ndarray:
    """Per-pixel feature stack (H, W, D_total) in recipe order: deep channels
    first, then the attention channel when enabled, then classical channels.

    ``cache`` is an optional ``store.FeatureCache``; deep features and
    attention are reused when the (image, backend, transform set) key hits.
    """
    image = np.asarray(image)
    parts: list[np.ndarray] = []
    if "deep" in recipe.sources:
        if backend is None:
            raise ValueError("deep source needs a backend")
        if backend.descriptor.to_json() != recipe.backend:
            raise ValueError(
                "backend does not match recipe:\n"
                f"  recipe:  {recipe.backend}\n"
                f"  backend: {backend.descriptor.to_json()}"
            )
        tset = geometry.TransformSet.from_json(recipe.transform_set)
        fm_data = am_data = None
        if cache is not None:
            fm_data, am_data = cache.lookup_pair(image, backend.descriptor, tset)
        if fm_data is None or am_data is None:
            fm, am = upsample(backend, image, tset, mode=mode, image_id=image_id)
            fm_data, am_data = fm.data, am.data
            if cache is not None:
                cache.store_pair(image, backend.descriptor, tset, fm_data, am_data)
        parts.append(np.asarray(fm_data, dtype=np.float32))
        if recipe.include_attention:
            parts.append(np.asarray(am_data, dtype=np.float32)[:, :, None])
    if "classical" in recipe.sources:
        fr = FilterRecipe.from_json(recipe.classical)
        parts.append(classical_features(image, fr).data)
    if len(parts) > 1:
        shapes = {p.shape[:2] for p in parts}
        if len(shapes) != 1:
            raise ValueError(f"feature sources disagree on spatial shape: {shapes}")
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=2)
