"""Random-forest baseline over classical features (the trainable-segmentation
pairing: 100 Gini trees, sqrt-D feature subsampling, bootstrap, unlimited
depth)."""

from __future__ import annotations

import numpy as np
from sklearn.ensemble import RandomForestClassifier


def canonical_row_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lexicographic row order over (features, label).

    Training rows are sorted into this canonical order before fitting so the
    seeded bootstrap (which draws indices from the row *count*) is unaffected
    by the caller's row ordering.
    """
    keys = [y] + [x[:, j] for j in range(x.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def fit_forest(
    x: np.ndarray, y: np.ndarray, seed: int = 0, n_trees: int = 100
) -> RandomForestClassifier:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if np.unique(y).size < 2:
        raise ValueError("need >=2 classes to train a classifier")
    order = canonical_row_order(x, y)
    clf = RandomForestClassifier(
        n_estimators=n_trees,
        criterion="gini",
        max_features="sqrt",
        bootstrap=True,
        max_depth=None,
        random_state=seed,
        n_jobs=1,
    )
    clf.fit(x[order], y[order])
    return clf
