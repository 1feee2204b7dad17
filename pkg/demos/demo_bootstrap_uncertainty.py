"""Bootstrap uncertainty from a point predictor.

A point predictor returns one answer with no confidence attached. Perturbing
its input with small seeded noise and predicting repeatedly turns output
sensitivity into a per-pixel variance map: pixels pinned down by observation
stay constant, pixels the predictor guesses swing between samples.

The noisy-oracle mock makes this visible analytically: with flip rate p on
masked cells, a free cell toggles between green and red, so its channel-
summed variance approaches 2 * (255 p (1-p))^2 / ... well, for p = 0.5 it is
simply 2 * 127.5^2 = 32512.5.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mapsight import (
    NoisyOracleEndpoint,
    OracleEndpoint,
    RoomSpec,
    bootstrap_uncertainty,
    generate_room,
    grid_to_rgb,
    periphery_mask,
    uncertain_cells,
)

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

room = generate_room(RoomSpec(), seed=11)
image = grid_to_rgb(room)
mask = periphery_mask(14, 2)  # a 2-patch band is hidden

# a perfect predictor is totally insensitive to input noise
_, field_oracle = bootstrap_uncertainty(
    OracleEndpoint(image), image, mask, n=16, sigma=2.0, seed=0
)
print("oracle endpoint:   max variance =", field_oracle.variance.max())

# an imperfect predictor betrays itself under bootstrapping
endpoint = NoisyOracleEndpoint(room, flip_rate=0.15)
mean_img, field = bootstrap_uncertainty(endpoint, image, mask, n=16, sigma=2.0, seed=0)
masked_px = ~mask.pixel_mask(16)
print("noisy endpoint:    mean variance on the hidden band =",
      round(float(field.variance[masked_px].mean()), 1))
print("cells above the default threshold:", len(uncertain_cells(field)))

fig, axes = plt.subplots(1, 3, figsize=(12, 4.2))
axes[0].imshow(image.pixels)
axes[0].set_title("ground truth")
axes[1].imshow(mean_img.pixels)
axes[1].set_title("mean of 16 bootstrap predictions")
im = axes[2].imshow(field.variance, cmap="magma")
axes[2].set_title("channel-summed variance")
fig.colorbar(im, ax=axes[2], shrink=0.8)
for ax in axes:
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(out_dir / "bootstrap_uncertainty.png", dpi=110)
print(f"figure written to {out_dir / 'bootstrap_uncertainty.png'}")
