"""Goal navigation with and without occupancy prediction.

The baseline robot plans only on what it has seen (unknown space is a wall,
with an optimistic fallback), so it discovers obstacles by walking at them
and pays for every detour. The predictive robot fills the unseen map with a
predictor's best guess and routes around obstacles it has only glimpsed.
Both advance to the frontier of their observed area each step, so the step
count is the number of observations needed.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mapsight import OracleEndpoint, World, grid_to_rgb, run_episode
from mapsight.gridmap import EXPLORE_COLORMAP, OCCUPIED, SemanticGrid

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# a hand-built scene: a long wall with a gap near the top forces a detour
labels = np.zeros((224, 224), dtype=int)
labels[40:224, 104:120] = OCCUPIED
labels[110:150, 30:104] = OCCUPIED  # side spur making the low route a trap
room = SemanticGrid(labels, EXPLORE_COLORMAP)
world = World(room, footprint=48, n_robots=1)
endpoint = OracleEndpoint(grid_to_rgb(room))

start, goal = (40, 180), (190, 180)
episodes = {
    mode: run_episode(world, start, goal, mode, endpoint)
    for mode in ("baseline", "predictive")
}

for mode, ep in episodes.items():
    print(f"{mode:<11} status={ep.status:<8} steps={ep.steps:>3} "
          f"optimistic-fallbacks={ep.fallbacks}")
reduction = 1 - episodes["predictive"].steps / episodes["baseline"].steps
print(f"step reduction from prediction: {100 * reduction:.0f}%")

fig, axes = plt.subplots(1, 2, figsize=(11, 5))
for ax, (mode, ep) in zip(axes, episodes.items()):
    ax.imshow(grid_to_rgb(room).pixels)
    xs = [p[0] for p in ep.path]
    ys = [p[1] for p in ep.path]
    ax.plot(xs, ys, "k.-", linewidth=1.5)
    ax.plot(*start, "ws", markersize=8, markeredgecolor="k")
    ax.plot(*goal, "w*", markersize=14, markeredgecolor="k")
    ax.set_title(f"{mode}: {ep.steps} steps")
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(out_dir / "navigation_with_prediction.png", dpi=110)
print(f"figure written to {out_dir / 'navigation_with_prediction.png'}")
