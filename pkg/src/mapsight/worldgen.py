"""Synthetic ground-truth room generation and external dataset ingestion.

Rooms are 3-class top-down maps (free / occupied / out-of-boundary) populated
with axis-aligned rectangles and L-shapes; regular shapes are what patch
inpainting exploits, so they make a representative desk-scale stand-in for
captured floor plans.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .gridmap import (
    BINARY_COLORMAP,
    EXPLORE_COLORMAP,
    FREE,
    OCCUPIED,
    OUT_OF_BOUNDS,
    Colormap,
    RgbImage,
    SemanticGrid,
    rgb_to_grid,
)

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


class WorldGenError(Exception):
    pass


@dataclass(frozen=True)
class RoomSpec:
    side: int = 224
    obstacle_count: tuple[int, int] = (4, 9)       # inclusive range
    obstacle_size: tuple[int, int] = (24, 64)      # inclusive side-length range
    inset: tuple[int, int] = (6, 18)               # out-of-boundary margin per edge
    l_shape_prob: float = 0.5
    area_fraction: tuple[float, float] = (0.05, 0.35)
    max_tries: int = 100
    seed: int = 0  # default seed; generate_room's argument wins

    def to_json_obj(self) -> dict:
        return {
            "side": self.side,
            "obstacle_count": list(self.obstacle_count),
            "obstacle_size": list(self.obstacle_size),
            "inset": list(self.inset),
            "l_shape_prob": self.l_shape_prob,
            "area_fraction": list(self.area_fraction),
            "max_tries": self.max_tries,
            "seed": self.seed,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RoomSpec":
        known = cls().to_json_obj()
        unknown = set(obj) - set(known)
        if unknown:
            raise ValueError(f"unknown room spec keys: {sorted(unknown)}")
        merged = {**known, **obj}
        return cls(
            side=int(merged["side"]),
            obstacle_count=tuple(merged["obstacle_count"]),
            obstacle_size=tuple(merged["obstacle_size"]),
            inset=tuple(merged["inset"]),
            l_shape_prob=float(merged["l_shape_prob"]),
            area_fraction=tuple(merged["area_fraction"]),
            max_tries=int(merged["max_tries"]),
            seed=int(merged["seed"]),
        )


def _paint_obstacle(labels: np.ndarray, rng: np.random.Generator, spec: RoomSpec,
                    lo: tuple[int, int], hi: tuple[int, int]) -> None:
    s0, s1 = spec.obstacle_size
    h = int(rng.integers(s0, s1 + 1))
    w = int(rng.integers(s0, s1 + 1))
    y0_max = max(lo[0], hi[0] - h)
    x0_max = max(lo[1], hi[1] - w)
    y0 = int(rng.integers(lo[0], y0_max + 1))
    x0 = int(rng.integers(lo[1], x0_max + 1))
    y1 = min(hi[0], y0 + h)
    x1 = min(hi[1], x0 + w)
    labels[y0:y1, x0:x1] = OCCUPIED
    if rng.random() < spec.l_shape_prob:
        # carve one quadrant back out to leave an L
        ch = (y1 - y0) // 2
        cw = (x1 - x0) // 2
        corner = int(rng.integers(0, 4))
        ys = slice(y0, y0 + ch) if corner in (0, 1) else slice(y1 - ch, y1)
        xs = slice(x0, x0 + cw) if corner in (0, 2) else slice(x1 - cw, x1)
        labels[ys, xs] = FREE


def generate_room(spec: RoomSpec, seed: int | None = None) -> SemanticGrid:
    """Deterministic 3-class room whose free cells form one 4-connected blob."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    side = spec.side
    for _ in range(spec.max_tries):
        labels = np.full((side, side), FREE, dtype=np.int16)
        i0, i1 = spec.inset
        top, bottom, left, right = (int(rng.integers(i0, i1 + 1)) for _ in range(4))
        if top:
            labels[:top, :] = OUT_OF_BOUNDS
        if bottom:
            labels[side - bottom :, :] = OUT_OF_BOUNDS
        if left:
            labels[:, :left] = OUT_OF_BOUNDS
        if right:
            labels[:, side - right :] = OUT_OF_BOUNDS
        lo = (top, left)
        hi = (side - bottom, side - right)
        if hi[0] - lo[0] < 8 or hi[1] - lo[1] < 8:
            continue
        count = int(rng.integers(spec.obstacle_count[0], spec.obstacle_count[1] + 1))
        for _ in range(count):
            _paint_obstacle(labels, rng, spec, lo, hi)
        interior = (hi[0] - lo[0]) * (hi[1] - lo[1])
        frac = float((labels == OCCUPIED).sum()) / interior
        if count > 0 and not (spec.area_fraction[0] <= frac <= spec.area_fraction[1]):
            continue
        free = labels == FREE
        if not free.any():
            continue
        _, n_components = ndimage.label(free, structure=_FOUR_CONN)
        if n_components != 1:
            continue
        return SemanticGrid(labels, EXPLORE_COLORMAP)
    raise WorldGenError(f"no valid room within {spec.max_tries} tries for {spec}")


def to_binary(grid: SemanticGrid) -> SemanticGrid:
    """Collapse a 3-class room to navigable / non-navigable."""
    labels = np.where(grid.labels == FREE, 0, 1).astype(np.int16)
    return SemanticGrid(labels, BINARY_COLORMAP)


@dataclass(frozen=True)
class DatasetItem:
    name: str
    rgb: RgbImage | None = None
    semantic: SemanticGrid | None = None
    binary: SemanticGrid | None = None

    def modalities(self) -> list[str]:
        out = []
        if self.rgb is not None:
            out.append("rgb")
        if self.semantic is not None:
            out.append("semantic")
        if self.binary is not None:
            out.append("binary")
        return out


def _nearest_axis_indices(src: int, scaled: int, out: int) -> np.ndarray:
    """Source indices for nearest-neighbor scale to `scaled` then center crop."""
    off = (scaled - out) // 2
    idx = ((np.arange(out) + off) * src) // scaled
    return np.clip(idx, 0, src - 1)


def resize_labels(labels: np.ndarray, out_side: int) -> np.ndarray:
    """Nearest-neighbor label resize: short side to out_side, center crop."""
    h, w = labels.shape
    short = min(h, w)
    sh = round(h * out_side / short)
    sw = round(w * out_side / short)
    ys = _nearest_axis_indices(h, sh, out_side)
    xs = _nearest_axis_indices(w, sw, out_side)
    return labels[np.ix_(ys, xs)]


def resize_rgb(img: RgbImage, out_side: int) -> RgbImage:
    """Bilinear RGB resize: short side to out_side, center crop."""
    h, w = img.height, img.width
    short = min(h, w)
    sh = round(h * out_side / short)
    sw = round(w * out_side / short)
    im = Image.fromarray(np.array(img.pixels), mode="RGB").resize((sw, sh), Image.BILINEAR)
    x0 = (sw - out_side) // 2
    y0 = (sh - out_side) // 2
    return RgbImage(np.asarray(im)[y0 : y0 + out_side, x0 : x0 + out_side])


def _load_label_png(path: Path, colormap: Colormap, out_side: int) -> SemanticGrid:
    with Image.open(path) as im:
        px = np.asarray(im.convert("RGB"))
    grid = rgb_to_grid(RgbImage(px), colormap)
    if grid.labels.shape != (out_side, out_side):
        return SemanticGrid(resize_labels(grid.labels, out_side), colormap)
    return grid


def ingest_dataset(directory, out_side: int = 224) -> tuple[list[DatasetItem], list[str]]:
    """Load an rgb/ + semantic/ + binary/ + colormap.json dataset directory.

    Items are paired by file stem on the rgb/ listing; label folders are
    optional per stem. Per-file problems are reported in the error list and
    the run continues, so count(rgb files) == count(items) + count(errors
    attributed to rgb files).
    """
    root = Path(directory)
    errors: list[str] = []
    items: list[DatasetItem] = []

    colormap = None
    cm_path = root / "colormap.json"
    if cm_path.exists():
        try:
            with open(cm_path, encoding="utf-8") as fh:
                colormap = Colormap.from_json_obj(json.load(fh))
        except (ValueError, OSError, json.JSONDecodeError) as exc:
            errors.append(f"colormap.json: {exc}")

    rgb_dir = root / "rgb"
    if not rgb_dir.is_dir():
        raise FileNotFoundError(f"{rgb_dir} does not exist")
    for rgb_path in sorted(rgb_dir.glob("*.png")):
        stem = rgb_path.stem
        try:
            with Image.open(rgb_path) as im:
                rgb = RgbImage(np.asarray(im.convert("RGB")))
            if rgb.pixels.shape[:2] != (out_side, out_side):
                rgb = resize_rgb(rgb, out_side)
        except (OSError, ValueError) as exc:
            errors.append(f"rgb/{rgb_path.name}: {exc}")
            continue
        semantic = binary = None
        sem_path = root / "semantic" / rgb_path.name
        if sem_path.exists():
            if colormap is None:
                errors.append(f"semantic/{rgb_path.name}: no usable colormap.json")
            else:
                try:
                    semantic = _load_label_png(sem_path, colormap, out_side)
                except (OSError, ValueError) as exc:
                    errors.append(f"semantic/{rgb_path.name}: {exc}")
        bin_path = root / "binary" / rgb_path.name
        if bin_path.exists():
            try:
                binary = _load_label_png(bin_path, BINARY_COLORMAP, out_side)
            except (OSError, ValueError) as exc:
                errors.append(f"binary/{rgb_path.name}: {exc}")
        items.append(DatasetItem(stem, rgb=rgb, semantic=semantic, binary=binary))

    for sub in ("semantic", "binary"):
        d = root / sub
        if d.is_dir():
            for p in sorted(d.glob("*.png")):
                if not (rgb_dir / p.name).exists():
                    errors.append(f"{sub}/{p.name}: no matching rgb image")
    return items, errors
