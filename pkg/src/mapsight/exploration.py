"""Multi-agent exploration policies and the coverage-vs-accuracy mission loop.

Robots share one belief (centralized decision making), observe a square
footprint under themselves, and fly over obstacles. Policies:

* ``lawnmower``   - boustrophedon sweep, one vertical strip per robot.
* ``kmeans_u``    - cluster unobserved cells, send each robot to a center.
* ``kmeans_r``    - kmeans_u, then regroup at the map center once stable.
* ``kmeans_u2``   - cluster unobserved plus high-bootstrap-variance cells.

A mission is single-threaded and fully determined by (seed, params); all
randomness is drawn from named sub-streams of the mission seed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .gridmap import (
    EXPLORE_COLORMAP,
    FREE,
    RgbImage,
    SemanticGrid,
    _frozen,
    footprint_mask,
    rgb_to_grid,
)
from .metrics import label_accuracy
from .predictor import predict_to_grid
from .seeding import substream
from .uncertainty import bootstrap_uncertainty

POLICIES = ("lawnmower", "kmeans_u", "kmeans_r", "kmeans_u2")

UNOBSERVED_COLOR = (128, 128, 128)  # never an exact colormap color


@dataclass(frozen=True, eq=False)
class World:
    truth: SemanticGrid
    footprint: int = 48
    n_robots: int = 3

    def __post_init__(self):
        if self.footprint <= 0 or self.footprint > min(self.truth.width, self.truth.height):
            raise ValueError("footprint must be positive and fit in the grid")
        if self.n_robots < 1:
            raise ValueError("need at least one robot")
        if self.truth.colormap != EXPLORE_COLORMAP:
            raise ValueError("exploration worlds use the free/occupied/out-of-boundary colormap")

    @property
    def width(self) -> int:
        return self.truth.width

    @property
    def height(self) -> int:
        return self.truth.height


@dataclass(frozen=True, eq=False)
class BeliefState:
    observed: np.ndarray  # (H, W) bool
    fused: np.ndarray     # (H, W, 3) uint8; truth colors where observed, gray sentinel elsewhere
    robot_positions: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "observed", _frozen(np.asarray(self.observed, dtype=bool)))
        object.__setattr__(self, "fused", _frozen(np.asarray(self.fused, dtype=np.uint8)))
        object.__setattr__(
            self,
            "robot_positions",
            tuple((float(x), float(y)) for x, y in self.robot_positions),
        )

    @property
    def coverage(self) -> float:
        return float(self.observed.mean())

    @property
    def fused_rgb(self) -> RgbImage:
        return RgbImage(self.fused)

    def with_positions(self, positions) -> "BeliefState":
        return BeliefState(self.observed, self.fused, tuple(positions))


def new_belief(world: World, positions) -> BeliefState:
    h, w = world.height, world.width
    fused = np.empty((h, w, 3), dtype=np.uint8)
    fused[:] = UNOBSERVED_COLOR
    return BeliefState(np.zeros((h, w), dtype=bool), fused, tuple(positions))


def _cell(position) -> tuple[int, int]:
    x, y = position
    return int(math.floor(x + 0.5)), int(math.floor(y + 0.5))


def footprint_bounds(x: int, y: int, fp: int, w: int, h: int) -> tuple[int, int, int, int]:
    """Half-open (x0, x1, y0, y1) of the clipped footprint centered at (x, y)."""
    half = fp // 2
    return max(0, x - half), min(w, x + fp - half), max(0, y - half), min(h, y + fp - half)


def observe(world: World, belief: BeliefState, position) -> BeliefState:
    """Mark the footprint square at ``position`` observed; fuse truth colors."""
    x, y = _cell(position)
    if not (0 <= x < world.width and 0 <= y < world.height):
        raise ValueError(f"position {position} is outside the grid")
    x0, x1, y0, y1 = footprint_bounds(x, y, world.footprint, world.width, world.height)
    observed = np.array(belief.observed)
    fused = np.array(belief.fused)
    observed[y0:y1, x0:x1] = True
    fused[y0:y1, x0:x1] = EXPLORE_COLORMAP.colors[world.truth.labels[y0:y1, x0:x1]]
    return BeliefState(observed, fused, belief.robot_positions)


def kmeans(points, k: int, seed: int | None = None, init=None,
           max_iter: int = 100, tol: float = 1e-3, trace: list | None = None) -> np.ndarray:
    """Lloyd's algorithm with seeded distinct random initial centers.

    Fewer distinct points than k collapses to one center per distinct point.
    An empty cluster is re-seeded at the point farthest from its center.
    ``init`` (k centers) skips random initialization, e.g. to warm-start from
    the previous step's centers.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return np.empty((0, 2))
    if len(pts) <= k:
        return np.unique(pts, axis=0).astype(np.float64)
    if init is not None and len(init) == k:
        centers = np.array(init, dtype=np.float64)
    else:
        uniq = np.unique(pts, axis=0)
        if len(uniq) <= k:
            return uniq.astype(np.float64)
        rng = np.random.default_rng(seed)
        centers = uniq[rng.choice(len(uniq), size=k, replace=False)].astype(np.float64)
    for _ in range(max_iter):
        d2 = cdist(pts, centers, "sqeuclidean")
        assign = np.argmin(d2, axis=1)
        if trace is not None:
            trace.append(float(d2[np.arange(len(pts)), assign].sum()))
        new = centers.copy()
        for c in range(len(centers)):
            members = assign == c
            if members.any():
                new[c] = pts[members].mean(axis=0)
            else:
                new[c] = pts[int(np.argmax(d2[:, c]))]
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol:
            break
    return centers


def assign_robots(positions, centers) -> dict[int, int]:
    """Injective robot -> center assignment minimizing total Euclidean distance."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    cen = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if len(pos) == 0 or len(cen) == 0:
        return {}
    cost = np.sqrt(((pos[:, None, :] - cen[None, :, :]) ** 2).sum(axis=2))
    rows, cols = linear_sum_assignment(cost)
    return {int(r): int(c) for r, c in zip(rows, cols)}


@dataclass(frozen=True)
class ClusterPlan:
    centers: tuple[tuple[float, float], ...]
    assignment: dict[int, int]


@dataclass
class ExploreParams:
    step_len: float = 16.0
    patch_size: int = 16
    n_boot: int = 8
    sigma: float = 2.0
    tau: float = 25.0
    accuracy_target: float = 0.95
    step_cap: int = 500
    stabilize_eps: float = 2.0
    stabilize_runs: int = 2


def _move_toward(pos, target, step_len: float) -> tuple[float, float]:
    dx = target[0] - pos[0]
    dy = target[1] - pos[1]
    d = math.hypot(dx, dy)
    if d <= step_len or d == 0.0:
        return (float(target[0]), float(target[1]))
    s = step_len / d
    return (pos[0] + dx * s, pos[1] + dy * s)


class LawnmowerPolicy:
    """Boustrophedon sweep over per-robot vertical strips."""

    name = "lawnmower"

    def __init__(self, world: World, params: ExploreParams):
        self.params = params
        self.routes = [deque(r) for r in self._routes(world, params)]

    @staticmethod
    def _routes(world: World, params: ExploreParams):
        w, h, fp, n = world.width, world.height, world.footprint, world.n_robots
        half = fp // 2
        strip_w = math.ceil(w / n)
        ys = []
        y = half
        while True:
            ys.append(min(y, h - 1))
            if y >= h - half:
                break
            y += fp
        routes = []
        for i in range(n):
            x0, x1 = i * strip_w, min(w, (i + 1) * strip_w)
            xl, xr = x0 + half, x1 - half
            if xr < xl:
                xl = xr = min(w - 1, max(0, (x0 + x1) // 2))
            xl = min(w - 1, max(0, xl))
            xr = min(w - 1, max(0, xr))
            route = []
            for j, yy in enumerate(ys):
                pair = [(xl, yy), (xr, yy)] if j % 2 == 0 else [(xr, yy), (xl, yy)]
                for p in pair:
                    if not route or route[-1] != p:
                        route.append(p)
            routes.append([(float(x), float(y)) for x, y in route])
        return routes

    def initial_positions(self, world: World, rng) -> list[tuple[float, float]]:
        # robots start at the head of their own scanline; no randomness here
        return [route.popleft() for route in self.routes]

    def step(self, world, belief, endpoint, rngs):
        positions = list(belief.robot_positions)
        for i, route in enumerate(self.routes):
            if not route:
                continue
            # a movement step ends at the next waypoint or after step_len,
            # whichever comes first, so every sweep waypoint gets observed
            pos = positions[i]
            target = route[0]
            d = math.hypot(target[0] - pos[0], target[1] - pos[1])
            if d <= self.params.step_len:
                pos = route.popleft()
            else:
                pos = _move_toward(pos, target, self.params.step_len)
            positions[i] = pos
            belief = observe(world, belief, pos)
        belief = belief.with_positions(positions)
        done = all(not r for r in self.routes)
        return belief, None, done


class KMeansPolicy:
    """Clustering-driven exploration; variants u, r, and u2."""

    def __init__(self, variant: str, world: World, params: ExploreParams):
        if variant not in ("u", "r", "u2"):
            raise ValueError(f"unknown kmeans variant {variant!r}")
        self.variant = variant
        self.name = f"kmeans_{variant}"
        self.params = params
        self.prev_centers: np.ndarray | None = None
        self.stable = 0
        self.phase = "cluster"

    def initial_positions(self, world: World, rng) -> list[tuple[float, float]]:
        free = np.argwhere(world.truth.labels == FREE)
        if len(free) == 0:
            raise ValueError("world has no free cells to place robots on")
        pick = rng.choice(len(free), size=world.n_robots, replace=len(free) < world.n_robots)
        return [(float(c), float(r)) for r, c in free[pick]]

    def _candidates(self, world, belief, endpoint, rngs) -> np.ndarray:
        cand = ~belief.observed
        if self.variant == "u2":
            mask = footprint_mask(belief.observed, self.params.patch_size)
            total = mask.patches_per_side**2
            if 0 < mask.n_visible < total:
                boot_seed = int(rngs["noise"].integers(0, 2**31))
                _, fld = bootstrap_uncertainty(
                    endpoint,
                    belief.fused_rgb,
                    mask,
                    n=self.params.n_boot,
                    sigma=self.params.sigma,
                    seed=boot_seed,
                    tau=self.params.tau,
                )
                cand = cand | ((fld.variance > self.params.tau) & ~belief.observed)
        return cand

    @staticmethod
    def _region_target(belief, pos, center, points, members) -> tuple[float, float]:
        """Where to drive for this cluster.

        The center itself when its cell is still unobserved; otherwise the
        nearest unobserved member of the cluster, so a robot parked on an
        already-cleared centroid keeps eating into its region instead of
        idling.
        """
        cx, cy = _cell(center)
        cx = min(max(cx, 0), belief.observed.shape[1] - 1)
        cy = min(max(cy, 0), belief.observed.shape[0] - 1)
        if not belief.observed[cy, cx]:
            return (float(center[0]), float(center[1]))
        mem = points[members]
        if len(mem) == 0:
            return (float(center[0]), float(center[1]))
        d2 = (mem[:, 0] - pos[0]) ** 2 + (mem[:, 1] - pos[1]) ** 2
        order = np.lexsort((mem[:, 0], mem[:, 1], d2))
        best = mem[order[0]]
        return (float(best[0]), float(best[1]))

    def _stability_update(self, centers: np.ndarray, arrived: bool) -> bool:
        prev = self.prev_centers
        self.prev_centers = centers
        if not arrived or prev is None or len(prev) != len(centers) or len(centers) == 0:
            # centers can only stabilize once the robots tasked with them are
            # there; while in transit nothing near the regions changes anyway
            self.stable = 0
            return False
        cost = np.sqrt(((prev[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2))
        rows, cols = linear_sum_assignment(cost)
        moved = float(cost[rows, cols].max())
        self.stable = self.stable + 1 if moved < self.params.stabilize_eps else 0
        return self.stable >= self.params.stabilize_runs

    def step(self, world, belief, endpoint, rngs):
        if self.phase == "recon":
            return self._recon_step(world, belief)
        cand = self._candidates(world, belief, endpoint, rngs)
        ys, xs = np.nonzero(cand)
        kmeans_seed = int(rngs["kmeans"].integers(0, 2**31))
        if len(xs) == 0:
            if self.variant == "r":
                self.phase = "recon"
                return self._recon_step(world, belief)
            return belief, None, True
        points = np.stack([xs, ys], axis=1).astype(np.float64)
        init = self.prev_centers if (
            self.prev_centers is not None and len(self.prev_centers) == world.n_robots
        ) else None
        centers = kmeans(points, world.n_robots, seed=kmeans_seed, init=init)
        assignment = assign_robots(belief.robot_positions, centers)
        membership = np.argmin(
            ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        positions = list(belief.robot_positions)
        arrived = True
        for r, c in assignment.items():
            target = self._region_target(belief, positions[r], centers[c], points,
                                         membership == c)
            d = math.hypot(target[0] - positions[r][0], target[1] - positions[r][1])
            arrived = arrived and d <= self.params.step_len
            positions[r] = _move_toward(positions[r], target, self.params.step_len)
        for pos in positions:
            belief = observe(world, belief, pos)
        belief = belief.with_positions(positions)
        plan = ClusterPlan(tuple((float(x), float(y)) for x, y in centers), assignment)
        stable = self._stability_update(centers, arrived)
        done = False
        if stable:
            if self.variant == "r":
                self.phase = "recon"
            else:
                done = True
        return belief, plan, done

    def _recon_step(self, world, belief):
        target = ((world.width - 1) / 2.0, (world.height - 1) / 2.0)
        positions = [
            _move_toward(p, target, self.params.step_len) for p in belief.robot_positions
        ]
        for pos in positions:
            belief = observe(world, belief, pos)
        belief = belief.with_positions(positions)
        done = all(math.hypot(p[0] - target[0], p[1] - target[1]) < 1e-9 for p in positions)
        return belief, None, done


def make_policy(name: str, world: World, params: ExploreParams):
    if name == "lawnmower":
        return LawnmowerPolicy(world, params)
    if name.startswith("kmeans_"):
        return KMeansPolicy(name.removeprefix("kmeans_"), world, params)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICIES}")


@dataclass(frozen=True)
class MissionRow:
    step: int
    coverage: float
    accuracy: float
    positions: tuple[tuple[float, float], ...]
    centers: tuple[tuple[float, float], ...]


@dataclass
class MissionLog:
    policy: str
    seed: int
    rows: list[MissionRow] = field(default_factory=list)
    stop_reason: str = "step_cap"
    coverage_at_95: float | None = None
    step_at_95: int | None = None
    final_accuracy: float = 0.0
    final_coverage: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.rows)

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "coverage_at_95": self.coverage_at_95,
            "step_at_95": self.step_at_95,
            "steps": self.steps,
            "final_accuracy": self.final_accuracy,
            "final_coverage": self.final_coverage,
            "stop_reason": self.stop_reason,
        }


def mission_prediction(endpoint, belief: BeliefState, params: ExploreParams) -> SemanticGrid:
    """Full-map label prediction from the current belief."""
    mask = footprint_mask(belief.observed, params.patch_size)
    total = mask.patches_per_side**2
    if mask.n_visible == 0 or mask.n_visible == total:
        # nothing to predict from, or nothing left to predict
        return rgb_to_grid(belief.fused_rgb, EXPLORE_COLORMAP)
    return predict_to_grid(
        endpoint,
        belief.fused_rgb,
        mask,
        EXPLORE_COLORMAP,
        observed=belief.observed,
    )


def run_mission(policy_name: str, world: World, endpoint,
                params: ExploreParams | None = None, seed: int = 0) -> MissionLog:
    """Run one exploration mission and log coverage/accuracy per step."""
    params = params or ExploreParams()
    rngs = {
        "placement": substream(seed, "placement"),
        "kmeans": substream(seed, "kmeans-init"),
        "noise": substream(seed, "noise"),
    }
    policy = make_policy(policy_name, world, params)
    positions = policy.initial_positions(world, rngs["placement"])
    belief = new_belief(world, positions)
    for pos in positions:
        belief = observe(world, belief, pos)

    log = MissionLog(policy=policy.name, seed=seed)
    for step in range(1, params.step_cap + 1):
        belief, plan, done = policy.step(world, belief, endpoint, rngs)
        grid = mission_prediction(endpoint, belief, params)
        acc = label_accuracy(grid, world.truth)
        cov = belief.coverage
        centers = plan.centers if plan is not None else ()
        log.rows.append(MissionRow(step, cov, acc, belief.robot_positions, centers))
        if log.coverage_at_95 is None and acc >= params.accuracy_target:
            log.coverage_at_95 = cov
            log.step_at_95 = step
        if done:
            log.stop_reason = "policy_done"
            break
    if log.rows:
        log.final_accuracy = log.rows[-1].accuracy
        log.final_coverage = log.rows[-1].coverage
    return log
