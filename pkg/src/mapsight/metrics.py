"""Image-quality and segmentation metrics.

Each metric accepts a ``region`` selector: ``full_image`` scores everything,
``masked_only`` scores only pixels inside masked (invisible) patches of a
:class:`~mapsight.gridmap.PatchMask`. SSIM follows the canonical 11x11
Gaussian-window formulation (sigma 1.5, K1=0.01, K2=0.03, L=255), averaged
over channels, with the window-radius border cropped before averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .gridmap import DEFAULT_PATCH, PatchMask, RgbImage, SemanticGrid

FULL_IMAGE = "full_image"
MASKED_ONLY = "masked_only"
REGIONS = (FULL_IMAGE, MASKED_ONLY)

PSNR_CAP_DB = 100.0

_SSIM_SIGMA = 1.5
_SSIM_TRUNCATE = 10 / 3  # radius int(10/3 * 1.5 + 0.5) = 5 -> 11-tap window
_SSIM_RADIUS = 5
_K1, _K2, _L = 0.01, 0.03, 255.0


def _check_dims(a: RgbImage, b: RgbImage) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"image dimensions differ: {a.pixels.shape} vs {b.pixels.shape}")


def _include_mask(shape, region: str, mask: PatchMask | None, patch_size: int) -> np.ndarray | None:
    """Pixel inclusion mask for the region, or None for everything."""
    if region == FULL_IMAGE:
        return None
    if region == MASKED_ONLY:
        if mask is None:
            raise ValueError("masked_only region requires a PatchMask")
        visible = mask.pixel_mask(patch_size)
        if visible.shape != tuple(shape):
            raise ValueError("mask geometry does not match the images")
        return ~visible
    raise ValueError(f"unknown region {region!r}")


def mse(
    a: RgbImage,
    b: RgbImage,
    region: str = FULL_IMAGE,
    mask: PatchMask | None = None,
    patch_size: int = DEFAULT_PATCH,
) -> float:
    """Mean squared pixel error on the 0-255 scale over the included region."""
    _check_dims(a, b)
    d2 = (a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) ** 2
    include = _include_mask(a.pixels.shape[:2], region, mask, patch_size)
    if include is None:
        return float(d2.mean())
    if not include.any():
        return 0.0
    return float(d2[include].mean())


def psnr(
    a: RgbImage,
    b: RgbImage,
    region: str = FULL_IMAGE,
    mask: PatchMask | None = None,
    patch_size: int = DEFAULT_PATCH,
    cap_db: float = PSNR_CAP_DB,
) -> float:
    """10*log10(255^2 / mse) in dB; identical inputs return ``cap_db``."""
    err = mse(a, b, region, mask, patch_size)
    if err <= 0.0:
        return cap_db
    return 10.0 * math.log10(255.0**2 / err)


def _ssim_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-pixel single-channel SSIM with the Gaussian-weighted local moments."""
    c1 = (_K1 * _L) ** 2
    c2 = (_K2 * _L) ** 2
    blur = lambda im: gaussian_filter(im, _SSIM_SIGMA, truncate=_SSIM_TRUNCATE, mode="constant")
    mx = blur(x)
    my = blur(y)
    vx = blur(x * x) - mx * mx
    vy = blur(y * y) - my * my
    cxy = blur(x * y) - mx * my
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(
    a: RgbImage,
    b: RgbImage,
    region: str = FULL_IMAGE,
    mask: PatchMask | None = None,
    patch_size: int = DEFAULT_PATCH,
) -> float:
    """Mean local SSIM, averaged over channels.

    For ``masked_only`` the visible patches of both inputs are first blanked
    to a common constant so the score cannot depend on visible content, then
    the local-SSIM map is averaged over masked pixels in the cropped interior.
    """
    _check_dims(a, b)
    h, w = a.pixels.shape[:2]
    win = 2 * _SSIM_RADIUS + 1
    if h < win or w < win:
        raise ValueError(f"images must be at least {win}x{win} for SSIM")
    ax = a.pixels.astype(np.float64)
    bx = b.pixels.astype(np.float64)
    include = _include_mask((h, w), region, mask, patch_size)
    if include is not None:
        ax = ax.copy()
        bx = bx.copy()
        ax[~include] = 0.0
        bx[~include] = 0.0
    r = _SSIM_RADIUS
    interior = (slice(r, h - r), slice(r, w - r))
    sel = None
    if include is not None:
        sel = include[interior]
        if not sel.any():
            return 1.0
    vals = []
    for c in range(3):
        m = _ssim_map(ax[:, :, c], bx[:, :, c])[interior]
        vals.append(m.mean() if sel is None else m[sel].mean())
    return float(np.mean(vals))


def miou(
    pred: SemanticGrid,
    truth: SemanticGrid,
    region: str = FULL_IMAGE,
    mask: PatchMask | None = None,
    patch_size: int = DEFAULT_PATCH,
) -> float:
    """Unweighted mean IoU over the classes present in truth or prediction."""
    if pred.colormap != truth.colormap:
        raise ValueError("mIoU requires grids with the same colormap")
    if pred.labels.shape != truth.labels.shape:
        raise ValueError("grid dimensions differ")
    p = pred.labels.ravel().astype(np.int64)
    t = truth.labels.ravel().astype(np.int64)
    include = _include_mask(pred.labels.shape, region, mask, patch_size)
    if include is not None:
        keep = include.ravel()
        p, t = p[keep], t[keep]
    if p.size == 0:
        return 1.0
    k = len(pred.colormap)
    confusion = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    inter = np.diag(confusion)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - inter
    present = union > 0
    return float((inter[present] / union[present]).mean())


def label_accuracy(pred: SemanticGrid, truth: SemanticGrid) -> float:
    """Fraction of cells whose predicted label matches the truth."""
    if pred.labels.shape != truth.labels.shape:
        raise ValueError("grid dimensions differ")
    return float((pred.labels == truth.labels).mean())


@dataclass(frozen=True)
class MetricReport:
    ssim: float
    psnr: float
    mse: float
    miou: float | None
    region: str

    @classmethod
    def compute(
        cls,
        pred_img: RgbImage,
        truth_img: RgbImage,
        region: str = FULL_IMAGE,
        mask: PatchMask | None = None,
        pred_grid: SemanticGrid | None = None,
        truth_grid: SemanticGrid | None = None,
        patch_size: int = DEFAULT_PATCH,
    ) -> "MetricReport":
        iou = None
        if pred_grid is not None and truth_grid is not None:
            iou = miou(pred_grid, truth_grid, region, mask, patch_size)
        return cls(
            ssim=ssim(pred_img, truth_img, region, mask, patch_size),
            psnr=psnr(pred_img, truth_img, region, mask, patch_size),
            mse=mse(pred_img, truth_img, region, mask, patch_size),
            miou=iou,
            region=region,
        )
