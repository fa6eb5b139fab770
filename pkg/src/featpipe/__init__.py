"""featpipe: dense visual-feature toolkit.

Transform-ensemble feature upsampling, unsupervised class-agnostic
segmentation, and weakly supervised pixel classification, with a CLI and an
HTTP labeling service.
"""

__version__ = "0.1.0"

from featpipe import cas, detect, geometry, pixelclf, store
from featpipe.featurize import AttentionMap, FeatureMap, upsample

__all__ = [
    "__version__",
    "geometry",
    "cas",
    "detect",
    "pixelclf",
    "store",
    "FeatureMap",
    "AttentionMap",
    "upsample",
]
