"""Three aerial robots mapping a room under four exploration policies.

Each robot observes a 48x48 px window under itself; observations are fused
into one shared belief. After every step the full map is predicted from the
belief and scored against the truth. The figure of merit is how much coverage
a policy needs before the predicted map reaches 95% label accuracy: sweeping
(lawnmower) needs a lot, clustering policies aim observations at the most
informative regions and need less.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mapsight import (
    NearestFillEndpoint,
    RoomSpec,
    World,
    generate_room,
    grid_to_rgb,
    run_mission,
)

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

room = generate_room(RoomSpec(), seed=23)
world = World(room, footprint=48, n_robots=3)

policies = ("lawnmower", "kmeans_u", "kmeans_r", "kmeans_u2")
print(f"{'policy':<10} {'steps':>5} {'final cov':>9} {'cov@95%acc':>10} {'stop':>12}")

fig, ax = plt.subplots(figsize=(7, 4.5))
for policy in policies:
    log = run_mission(policy, world, NearestFillEndpoint(), seed=4)
    cov95 = f"{log.coverage_at_95:.3f}" if log.coverage_at_95 is not None else "never"
    print(f"{policy:<10} {log.steps:>5} {log.final_coverage:>9.3f} "
          f"{cov95:>10} {log.stop_reason:>12}")
    ax.plot(
        [r.coverage for r in log.rows],
        [r.accuracy for r in log.rows],
        marker=".", markersize=3, label=policy,
    )

ax.axhline(0.95, color="gray", linestyle="--", linewidth=1, label="95% accuracy")
ax.set_xlabel("coverage (fraction of cells observed)")
ax.set_ylabel("prediction accuracy")
ax.set_title("exploration efficiency: accuracy vs coverage (nearest-fill predictor)")
ax.legend()
fig.tight_layout()
fig.savefig(out_dir / "exploration_policies.png", dpi=110)
print(f"\nfigure written to {out_dir / 'exploration_policies.png'}")
