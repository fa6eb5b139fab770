import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_shift_flip_set(rng, max_shift=3, max_size=8):
    """A random transform set of shifts, flips and flip-shift compositions."""
    from featpipe import geometry as g

    picks = [g.identity()]
    n = rng.integers(1, max_size)
    for _ in range(n):
        kind = rng.integers(0, 3)
        dx, dy = int(rng.integers(-max_shift, max_shift + 1)), int(
            rng.integers(-max_shift, max_shift + 1)
        )
        if kind == 0:
            picks.append(g.shift(dx, dy))
        elif kind == 1:
            picks.append(g.flip("horizontal" if rng.integers(2) else "vertical"))
        else:
            axis = "horizontal" if rng.integers(2) else "vertical"
            picks.append(g.compose(g.flip(axis), g.shift(dx, dy)))
    return g.TransformSet.from_transforms(picks)
