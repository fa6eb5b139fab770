"""Patch featurizer backends and the transform-ensemble upsampling engine."""

from featpipe.featurize.backends import (
    PatchMeanBackend,
    PrecomputedBackend,
    TorchscriptBackend,
    get_backend,
)
from featpipe.featurize.engine import featurize_patches, upsample
from featpipe.featurize.io import FmapFormatError, read_fmap, write_fmap
from featpipe.featurize.ops import keypoint_query, pca_rgb
from featpipe.featurize.types import (
    AttentionMap,
    BackendDescriptor,
    FeatureMap,
    FeaturizerBackend,
)

__all__ = [
    "AttentionMap",
    "BackendDescriptor",
    "FeatureMap",
    "FeaturizerBackend",
    "FmapFormatError",
    "PatchMeanBackend",
    "PrecomputedBackend",
    "TorchscriptBackend",
    "featurize_patches",
    "get_backend",
    "keypoint_query",
    "pca_rgb",
    "read_fmap",
    "upsample",
    "write_fmap",
]
