import numpy as np
import pytest

from mapsight.gridmap import EXPLORE_COLORMAP, Colormap, RgbImage, SemanticGrid


def random_image(rng, side=224) -> RgbImage:
    return RgbImage(rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8))


def random_grid(rng, side=32, n_labels=3, colormap=None) -> SemanticGrid:
    if colormap is None:
        colormap = random_colormap(rng, n_labels)
    return SemanticGrid(rng.integers(0, len(colormap), size=(side, side)), colormap)


def random_colormap(rng, n_labels=3) -> Colormap:
    colors = set()
    while len(colors) < n_labels:
        colors.add(tuple(int(v) for v in rng.integers(0, 256, size=3)))
    ordered = sorted(colors)
    return Colormap.from_entries(
        [(i, ordered[i], f"class_{i}") for i in range(n_labels)]
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def explore_colormap():
    return EXPLORE_COLORMAP
