"""Weakly supervised pixel classification: classical filter banks, logistic
regression on deep features, random-forest baseline, hybrid stacks, and
label smoothing."""

from featpipe.pixelclf.classical import (
    ClassicalFeatureStack,
    FilterRecipe,
    classical_features,
)
from featpipe.pixelclf.logistic import LogisticFit, fit_logistic, loss_and_grad
from featpipe.pixelclf.model import (
    FeatureRecipe,
    PixelClassifier,
    hybrid_stack,
    load_classifier,
    predict,
    save_classifier,
    train,
)
from featpipe.pixelclf.pipeline import build_feature_stack, make_recipe
from featpipe.pixelclf.smooth import smooth

__all__ = [
    "ClassicalFeatureStack",
    "FeatureRecipe",
    "FilterRecipe",
    "LogisticFit",
    "PixelClassifier",
    "build_feature_stack",
    "classical_features",
    "fit_logistic",
    "hybrid_stack",
    "load_classifier",
    "loss_and_grad",
    "make_recipe",
    "predict",
    "save_classifier",
    "smooth",
    "train",
]
