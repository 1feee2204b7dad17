"""Single-robot goal navigation with prediction-augmented costmaps.

Each step: observe the footprint at the current cell, build a costmap
(predicted labels in predictive mode; observed-only with unknown impassable
in baseline mode), plan with A*, then advance along the plan up to the last
already-observed cell (the frontier edge). The robot never physically enters
unobserved or occupied space.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .exploration import BeliefState, World, new_belief, observe
from .gridmap import EXPLORE_COLORMAP, FREE, footprint_mask, rgb_to_grid
from .predictor import predict_to_grid

SQRT2 = math.sqrt(2.0)

MODES = ("predictive", "baseline")


@dataclass(frozen=True, eq=False)
class Costmap:
    """Per-cell traversability; traversable cells cost 1, others are impassable."""

    traversable: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.traversable.shape[0]

    @property
    def width(self) -> int:
        return self.traversable.shape[1]


def costmap_from_labels(labels: np.ndarray, unknown: np.ndarray | None = None,
                        unknown_traversable: bool = False) -> Costmap:
    """Free cells are traversable; occupied and out-of-boundary are not.

    ``unknown`` marks cells with no label information: impassable by default
    (the non-predictive baseline), traversable in optimistic-retry mode.
    """
    trav = labels == FREE
    if unknown is not None:
        trav = (trav & ~unknown) | (unknown if unknown_traversable else False)
    return Costmap(trav)


def astar(costmap: Costmap, start: tuple[int, int], goal: tuple[int, int]):
    """8-connected shortest path (straight 1, diagonal sqrt(2)), or None.

    Uses the octile-distance heuristic; cutting corners diagonally past an
    impassable cell is forbidden. Returns the cell list including start and
    goal; ``[start]`` when start == goal.
    """
    w, h = costmap.width, costmap.height
    sx, sy = start
    gx, gy = goal
    if not (0 <= sx < w and 0 <= sy < h and 0 <= gx < w and 0 <= gy < h):
        raise ValueError("start/goal outside the grid")
    trav = costmap.traversable
    if not trav[sy, sx]:
        raise ValueError("start cell is not traversable")
    if (sx, sy) == (gx, gy):
        return [(sx, sy)]
    if not trav[gy, gx]:
        return None

    def heuristic(x, y):
        dx = abs(x - gx)
        dy = abs(y - gy)
        return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)

    g = np.full((h, w), np.inf)
    g[sy, sx] = 0.0
    came: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    # ties on f prefer smaller h (closer to the goal): keeps optimal paths
    # direct instead of staircase-wandering, and fully deterministic
    h0 = heuristic(sx, sy)
    horizon = [(h0, h0, 0, sx, sy)]
    closed = np.zeros((h, w), dtype=bool)
    while horizon:
        _, _, _, x, y = heapq.heappop(horizon)
        if closed[y, x]:
            continue
        if (x, y) == (gx, gy):
            path = [(x, y)]
            while (x, y) != (sx, sy):
                x, y = came[(x, y)]
                path.append((x, y))
            return path[::-1]
        closed[y, x] = True
        base = g[y, x]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = x + dx, y + dy
                if not (0 <= nx < w and 0 <= ny < h) or not trav[ny, nx]:
                    continue
                if dx != 0 and dy != 0:
                    if not (trav[y, nx] and trav[ny, x]):
                        continue  # no corner cutting
                    step = SQRT2
                else:
                    step = 1.0
                ng = base + step
                if ng < g[ny, nx] - 1e-12:
                    g[ny, nx] = ng
                    came[(nx, ny)] = (x, y)
                    counter += 1
                    hn = heuristic(nx, ny)
                    heapq.heappush(horizon, (ng + hn, hn, counter, nx, ny))
    return None


def path_cost(path) -> float:
    cost = 0.0
    for (x0, y0), (x1, y1) in zip(path, path[1:]):
        cost += SQRT2 if (x0 != x1 and y0 != y1) else 1.0
    return cost


@dataclass
class NavParams:
    step_cap: int = 200
    patch_size: int = 16


@dataclass
class NavEpisode:
    start: tuple[int, int]
    goal: tuple[int, int]
    mode: str
    steps: int = 0
    path: list[tuple[int, int]] = field(default_factory=list)
    status: str = "failed"
    fallbacks: int = 0


def _planning_costmap(world: World, belief: BeliefState, endpoint, mode: str,
                      params: NavParams, unknown_traversable: bool = False) -> Costmap:
    observed = belief.observed
    if mode == "predictive":
        mask = footprint_mask(observed, params.patch_size)
        total = mask.patches_per_side**2
        if 0 < mask.n_visible < total:
            grid = predict_to_grid(
                endpoint, belief.fused_rgb, mask, EXPLORE_COLORMAP, observed=observed
            )
        else:
            grid = rgb_to_grid(belief.fused_rgb, EXPLORE_COLORMAP)
        labels = grid.labels
        if unknown_traversable:
            return Costmap((labels == FREE) | ~observed)
        return costmap_from_labels(labels)
    if mode == "baseline":
        labels = rgb_to_grid(belief.fused_rgb, EXPLORE_COLORMAP).labels
        return costmap_from_labels(labels, unknown=~observed,
                                   unknown_traversable=unknown_traversable)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


class NoPathError(Exception):
    pass


def nav_step(world: World, belief: BeliefState, endpoint, mode: str,
             goal: tuple[int, int], params: NavParams | None = None):
    """One observe-plan-move cycle.

    Returns (belief', new_position, reached, fallback_used). Raises
    ``NoPathError`` when even the optimistic retry finds no route.
    """
    params = params or NavParams()
    pos = belief.robot_positions[0]
    cell = (int(round(pos[0])), int(round(pos[1])))
    belief = observe(world, belief, cell)

    fallback = False
    costmap = _planning_costmap(world, belief, endpoint, mode, params)
    plan = astar(costmap, cell, goal)
    if plan is None:
        fallback = True
        costmap = _planning_costmap(world, belief, endpoint, mode, params,
                                    unknown_traversable=True)
        plan = astar(costmap, cell, goal)
        if plan is None:
            raise NoPathError(f"no route from {cell} to {goal}")

    # advance along the plan, stopping at the frontier edge
    stop = cell
    for nxt in plan[1:]:
        if not belief.observed[nxt[1], nxt[0]]:
            break
        stop = nxt
    belief = belief.with_positions([(float(stop[0]), float(stop[1]))])
    return belief, stop, stop == goal, fallback


def run_episode(world: World, start: tuple[int, int], goal: tuple[int, int],
                mode: str, endpoint, params: NavParams | None = None) -> NavEpisode:
    """Repeat nav_step until the goal is reached or the step cap runs out."""
    params = params or NavParams()
    if start == goal:
        raise ValueError("start and goal must differ")
    for name, (x, y) in (("start", start), ("goal", goal)):
        if not (0 <= x < world.width and 0 <= y < world.height):
            raise ValueError(f"{name} {x, y} outside the grid")
        if world.truth.labels[y, x] != FREE:
            raise ValueError(f"{name} {x, y} is not on a free cell")

    episode = NavEpisode(start=start, goal=goal, mode=mode)
    belief = new_belief(world, [(float(start[0]), float(start[1]))])
    episode.path.append(start)
    for _ in range(params.step_cap):
        try:
            belief, stop, reached, fallback = nav_step(
                world, belief, endpoint, mode, goal, params
            )
        except NoPathError:
            return episode
        episode.steps += 1
        episode.fallbacks += int(fallback)
        episode.path.append(stop)
        if reached:
            episode.status = "reached"
            return episode
        if len(episode.path) >= 3 and episode.path[-1] == episode.path[-2]:
            return episode  # wedged: no progress is possible
    return episode
