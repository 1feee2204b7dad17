"""Bootstrap uncertainty for point-prediction inpainting endpoints.

A point predictor gives no confidence on its own; perturbing its input with
small seeded noise and re-predicting n times turns output sensitivity into a
per-pixel variance field (summed over channels). Pixels the predictor pins
down from structure barely move; pixels it guesses swing between samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .gridmap import PatchMask, RgbImage, _frozen
from .predictor import DEFAULT_NOISE_SIGMA, PredictRequest, predict

DEFAULT_SAMPLES = 8
DEFAULT_TAU = 25.0


@dataclass(frozen=True, eq=False)
class UncertaintyField:
    variance: np.ndarray  # (H, W) float64, channel-summed, 0-255^2 scale
    n_samples: int
    sigma: float
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        var = np.asarray(self.variance, dtype=np.float64)
        if var.ndim != 2 or var.min() < 0:
            raise ValueError("variance must be a non-negative (H, W) field")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        object.__setattr__(self, "variance", _frozen(var))

    @property
    def height(self) -> int:
        return self.variance.shape[0]

    @property
    def width(self) -> int:
        return self.variance.shape[1]


def bootstrap_uncertainty(
    endpoint,
    image: RgbImage,
    mask: PatchMask,
    n: int = DEFAULT_SAMPLES,
    sigma: float = DEFAULT_NOISE_SIGMA,
    seed: int = 0,
    tau: float = DEFAULT_TAU,
) -> tuple[RgbImage, UncertaintyField]:
    """n seeded re-predictions -> (mean prediction, variance field).

    Sample i runs with seed ``seed + i``. Variance is the population
    (divide-by-n) variance per channel, summed over channels; visible-patch
    pixels are forced to zero since passthrough makes them constant anyway.
    Any sample failure fails the whole call.
    """
    if n < 2:
        raise ValueError("bootstrap needs n >= 2 samples")
    acc = np.zeros(image.pixels.shape, dtype=np.float64)
    acc_sq = np.zeros(image.pixels.shape, dtype=np.float64)
    for i in range(n):
        out = predict(endpoint, PredictRequest(image, mask, sigma, seed + i)).pixels
        out = out.astype(np.float64)
        acc += out
        acc_sq += out * out
    mean = acc / n
    var = np.clip(acc_sq / n - mean * mean, 0.0, None).sum(axis=2)
    var[mask.pixel_mask(image.width // mask.patches_per_side)] = 0.0
    mean_img = RgbImage(np.clip(np.rint(mean), 0, 255).astype(np.uint8))
    return mean_img, UncertaintyField(var, n_samples=n, sigma=sigma, tau=tau)


def uncertain_cells(field: UncertaintyField, tau: float | None = None) -> set[tuple[int, int]]:
    """(x, y) coordinates whose variance exceeds the threshold."""
    t = field.tau if tau is None else tau
    if t < 0:
        raise ValueError("tau must be >= 0")
    ys, xs = np.nonzero(field.variance > t)
    return {(int(x), int(y)) for x, y in zip(xs, ys)}


def save_uncertainty_png(field: UncertaintyField, path) -> None:
    """16-bit grayscale dump of the variance field (clamped to [0, 65535])."""
    arr = np.clip(np.rint(field.variance), 0, 65535).astype(np.uint16)
    Image.fromarray(arr).save(path, format="PNG")
