"""Synthetic ground-truth rooms: what the generator produces and guarantees.

Every map is 224x224 with three classes (free / occupied / out-of-boundary),
a connected free region, and a bounded obstacle density. Maps round-trip
losslessly through PNG + a colormap sidecar, so generated suites can be
inspected or reused outside this package.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mapsight import RoomSpec, generate_room, grid_to_rgb, load_grid, save_grid
from mapsight.gridmap import FREE, OCCUPIED, OUT_OF_BOUNDS
from mapsight.worldgen import to_binary

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

spec = RoomSpec()
fig, axes = plt.subplots(2, 4, figsize=(13, 7))
for i, ax in enumerate(axes.ravel()):
    room = generate_room(spec, seed=100 + i)
    counts = np.bincount(room.labels.ravel(), minlength=3)
    ax.imshow(grid_to_rgb(room).pixels)
    ax.set_title(
        f"seed {100 + i}: {counts[OCCUPIED] / counts.sum():.0%} occupied", fontsize=9
    )
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(out_dir / "generated_rooms.png", dpi=110)
print(f"figure written to {out_dir / 'generated_rooms.png'}")

# serialization round trip: PNG in class colors + colormap.json sidecar
room = generate_room(spec, seed=100)
png = out_dir / "room_seed100.png"
save_grid(room, png)
assert load_grid(png) == room
print(f"lossless PNG round trip confirmed for {png}")

binary = to_binary(room)
save_grid(binary, out_dir / "room_seed100_binary.png")
print("binary (navigable / non-navigable) variant written alongside")
