"""Field-of-view expansion on a synthetic semantic map.

A robot centered in a 224x224 map senses everything except a band of 16px
patches along the border. An inpainting predictor fills the band back in,
expanding the effective perceptual range by 1.17x / 1.4x / 1.75x for band
widths of 1 / 2 / 3 patches. Here the built-in nearest-fill mock stands in
for a learned model; swap in `wire:<addr>` for a real service.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mapsight import (
    EXPLORE_COLORMAP,
    MetricReport,
    NearestFillEndpoint,
    PredictRequest,
    RoomSpec,
    expansion_factor,
    generate_room,
    grid_to_rgb,
    periphery_mask,
    predict,
    rgb_to_grid,
)

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# a reproducible room: free space (green), obstacles (red), boundary (blue)
room = generate_room(RoomSpec(), seed=7)
image = grid_to_rgb(room)
endpoint = NearestFillEndpoint()

print("masked band -> expansion, and how well nearest-fill restores it")
print(f"{'band':>4} {'expansion':>9} {'ssim':>7} {'psnr':>7} {'mse':>9} {'miou':>6}")

fig, axes = plt.subplots(2, 4, figsize=(14, 7))
axes[0, 0].imshow(image.pixels)
axes[0, 0].set_title("ground truth")
axes[1, 0].axis("off")

for col, k in enumerate((1, 2, 3), start=1):
    mask = periphery_mask(14, k)

    # what the robot actually sees: the masked band blanked out
    seen = np.array(image.pixels)
    seen[~mask.pixel_mask(16)] = 128
    axes[0, col].imshow(seen)
    axes[0, col].set_title(f"input, {k}-patch band masked")

    predicted = predict(endpoint, PredictRequest(image, mask))
    axes[1, col].imshow(predicted.pixels)
    axes[1, col].set_title(f"reconstruction ({expansion_factor(224, k):.2f}x)")

    report = MetricReport.compute(
        predicted, image, "full_image", mask,
        pred_grid=rgb_to_grid(predicted, EXPLORE_COLORMAP), truth_grid=room,
    )
    print(
        f"{k:>4} {expansion_factor(224, k):>8.3f}x {report.ssim:>7.3f} "
        f"{report.psnr:>7.2f} {report.mse:>9.1f} {report.miou:>6.3f}"
    )

for ax in axes.ravel():
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(out_dir / "fov_expansion.png", dpi=110)
print(f"\nfigure written to {out_dir / 'fov_expansion.png'}")
