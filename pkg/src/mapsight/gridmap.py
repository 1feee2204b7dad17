"""Semantic grids, colormaps, RGB rasters, and patch-aligned visibility masks.

All types are immutable value objects: the wrapped numpy arrays are frozen at
construction, so instances can be shared freely across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

DEFAULT_PATCH = 16
DEFAULT_SIDE = 224

# Labels of the 3-class palette used by exploration and navigation.
FREE = 0
OCCUPIED = 1
OUT_OF_BOUNDS = 2


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Colormap:
    """Ordered label -> color table. Labels are contiguous from 0."""

    colors: np.ndarray  # (K, 3) uint8
    names: tuple[str, ...]

    def __post_init__(self):
        colors = np.asarray(self.colors, dtype=np.int64)
        if colors.ndim != 2 or colors.shape[1] != 3 or colors.shape[0] == 0:
            raise ValueError("colormap needs a non-empty (K, 3) color table")
        if colors.min() < 0 or colors.max() > 255:
            raise ValueError("colors must be in [0, 255]")
        if len({tuple(c) for c in colors.tolist()}) != len(colors):
            raise ValueError("colormap colors must be pairwise distinct")
        if len(self.names) != len(colors):
            raise ValueError("one name per color required")
        object.__setattr__(self, "colors", _frozen(colors.astype(np.uint8)))
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_entries(cls, entries) -> "Colormap":
        """Build from [(label, (r, g, b), name), ...]; labels must be 0..K-1."""
        entries = sorted(entries, key=lambda e: e[0])
        labels = [e[0] for e in entries]
        if labels != list(range(len(labels))):
            raise ValueError("labels must be unique and contiguous from 0")
        return cls(np.array([e[1] for e in entries]), tuple(e[2] for e in entries))

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Colormap)
            and self.names == other.names
            and np.array_equal(self.colors, other.colors)
        )

    def to_json_obj(self) -> dict:
        return {
            "labels": [
                {"id": i, "name": self.names[i], "rgb": [int(v) for v in self.colors[i]]}
                for i in range(len(self))
            ]
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Colormap":
        try:
            entries = [(e["id"], tuple(e["rgb"]), e["name"]) for e in obj["labels"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed colormap json: {exc}") from exc
        return cls.from_entries(entries)


# free / occupied / out-of-boundary as green, red, blue.
EXPLORE_COLORMAP = Colormap.from_entries(
    [
        (FREE, (0, 255, 0), "free"),
        (OCCUPIED, (255, 0, 0), "occupied"),
        (OUT_OF_BOUNDS, (0, 0, 255), "out_of_boundary"),
    ]
)

# Navigable / non-navigable two-class palette for binary maps.
BINARY_COLORMAP = Colormap.from_entries(
    [
        (0, (255, 255, 255), "navigable"),
        (1, (0, 0, 0), "non_navigable"),
    ]
)


@dataclass(frozen=True, eq=False)
class SemanticGrid:
    """H x W grid of small-integer class labels plus its colormap."""

    labels: np.ndarray  # (H, W) int16
    colormap: Colormap

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError("labels must be a non-empty (H, W) array")
        if labels.min() < 0 or labels.max() >= len(self.colormap):
            raise ValueError("every label must appear in the colormap")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int16)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SemanticGrid)
            and self.colormap == other.colormap
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True, eq=False)
class RgbImage:
    """H x W raster of RGB triples in [0, 255]."""

    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.size == 0:
            raise ValueError("pixels must be a non-empty (H, W, 3) array")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255:
                raise ValueError("pixel values must be in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, RgbImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class PatchMask:
    """Boolean visibility per patch on a patch-aligned grid (True = visible)."""

    visible: np.ndarray  # (P, P) bool

    def __post_init__(self):
        vis = np.asarray(self.visible, dtype=bool)
        if vis.ndim != 2 or vis.shape[0] != vis.shape[1] or vis.shape[0] == 0:
            raise ValueError("visibility must be a square (P, P) bool array")
        object.__setattr__(self, "visible", _frozen(vis))

    @property
    def patches_per_side(self) -> int:
        return self.visible.shape[0]

    @property
    def n_visible(self) -> int:
        return int(self.visible.sum())

    def pixel_mask(self, patch_size: int = DEFAULT_PATCH) -> np.ndarray:
        """Expand patch visibility to a pixel-level bool array (cached)."""
        cache = self.__dict__.setdefault("_pixel_cache", {})
        got = cache.get(patch_size)
        if got is None:
            got = _frozen(
                np.repeat(np.repeat(self.visible, patch_size, axis=0), patch_size, axis=1)
            )
            cache[patch_size] = got
        return got

    def __eq__(self, other) -> bool:
        return isinstance(other, PatchMask) and np.array_equal(self.visible, other.visible)


def grid_to_rgb(grid: SemanticGrid) -> RgbImage:
    """Replace each label by its colormap color."""
    return RgbImage(grid.colormap.colors[grid.labels])


def rgb_to_grid(img: RgbImage, colormap: Colormap) -> SemanticGrid:
    """Assign each pixel the label of the nearest colormap color.

    Distance is squared Euclidean in raw RGB; ties resolve to the lowest
    label index.
    """
    px = img.pixels.astype(np.int32)
    colors = colormap.colors.astype(np.int32)
    d2 = np.zeros((img.height, img.width, len(colormap)), dtype=np.int32)
    for c in range(3):
        d2 += (px[:, :, c, None] - colors[None, None, :, c]) ** 2
    return SemanticGrid(np.argmin(d2, axis=2), colormap)


def periphery_mask(patches_per_side: int, k: int) -> PatchMask:
    """Mask a band of k patches along every image edge; interior stays visible."""
    p = patches_per_side
    if not 0 <= k < p / 2:
        raise ValueError(f"periphery width k={k} must satisfy 0 <= k < {p}/2")
    vis = np.zeros((p, p), dtype=bool)
    vis[k : p - k, k : p - k] = True
    return PatchMask(vis)


def expansion_factor(image_side: int, k: int, patch_size: int = DEFAULT_PATCH) -> float:
    """Perceptual-range ratio for a robot centered in the image.

    Masking k patches on each side shrinks the directly sensed half-width from
    side/2 to side/2 - k*patch; predicting the band back expands range by the
    inverse ratio.
    """
    half = image_side / 2
    if image_side <= 0 or k < 0 or k * patch_size >= half:
        raise ValueError(f"degenerate periphery width k={k} for side {image_side}")
    return half / (half - k * patch_size)


def footprint_mask(observed: np.ndarray, patch_size: int = DEFAULT_PATCH) -> PatchMask:
    """Patch visibility from a pixel-level observed grid.

    A patch is visible only when every one of its pixels has been observed;
    partially observed patches stay masked.
    """
    obs = np.asarray(observed, dtype=bool)
    h, w = obs.shape
    if h % patch_size or w % patch_size or h != w:
        raise ValueError("grid side must be square and divisible by patch size")
    p = h // patch_size
    return PatchMask(obs.reshape(p, patch_size, p, patch_size).all(axis=(1, 3)))


def save_image(img: RgbImage, path) -> None:
    Image.fromarray(np.array(img.pixels), mode="RGB").save(path, format="PNG")


def load_image(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB")))


def _sidecar(png_path) -> Path:
    return Path(png_path).with_suffix(".json")


def save_grid(grid: SemanticGrid, png_path, json_path=None) -> None:
    """Persist a grid as a PNG in colormap colors plus a sidecar colormap file."""
    save_image(grid_to_rgb(grid), png_path)
    with open(json_path or _sidecar(png_path), "w", encoding="utf-8") as fh:
        json.dump(grid.colormap.to_json_obj(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_grid(png_path, json_path=None) -> SemanticGrid:
    with open(json_path or _sidecar(png_path), encoding="utf-8") as fh:
        colormap = Colormap.from_json_obj(json.load(fh))
    return rgb_to_grid(load_image(png_path), colormap)
