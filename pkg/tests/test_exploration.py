import itertools
import math

import numpy as np
import pytest

from mapsight.exploration import (
    ExploreParams,
    KMeansPolicy,
    LawnmowerPolicy,
    World,
    assign_robots,
    kmeans,
    make_policy,
    new_belief,
    observe,
    run_mission,
)
from mapsight.gridmap import EXPLORE_COLORMAP, SemanticGrid, grid_to_rgb
from mapsight.predictor import NearestFillEndpoint, NoisyOracleEndpoint, OracleEndpoint
from mapsight.worldgen import RoomSpec, generate_room


def empty_world(side=224, footprint=48, n_robots=3) -> World:
    grid = SemanticGrid(np.zeros((side, side), dtype=int), EXPLORE_COLORMAP)
    return World(grid, footprint=footprint, n_robots=n_robots)


class TestObserve:
    def test_center_footprint_count(self):
        world = empty_world()
        belief = new_belief(world, [(112.0, 112.0)])
        belief = observe(world, belief, (112, 112))
        assert int(belief.observed.sum()) == 48 * 48

    def test_corner_clipped(self):
        world = empty_world()
        belief = observe(world, new_belief(world, [(0.0, 0.0)]), (0, 0))
        assert int(belief.observed.sum()) == 24 * 24

    def test_idempotent(self):
        world = empty_world()
        b1 = observe(world, new_belief(world, [(50.0, 50.0)]), (50, 50))
        b2 = observe(world, b1, (50, 50))
        assert (b1.observed == b2.observed).all()
        assert (b1.fused == b2.fused).all()

    def test_fused_colors_match_truth(self):
        grid = generate_room(RoomSpec(), seed=5)
        world = World(grid)
        belief = observe(world, new_belief(world, [(60.0, 60.0)]), (60, 60))
        obs = belief.observed
        truth_rgb = grid_to_rgb(grid).pixels
        assert (belief.fused[obs] == truth_rgb[obs]).all()
        assert (belief.fused[~obs] == np.array([128, 128, 128], dtype=np.uint8)).all()

    def test_outside_grid_rejected(self):
        world = empty_world()
        with pytest.raises(ValueError):
            observe(world, new_belief(world, [(0.0, 0.0)]), (300, 10))


class TestKMeans:
    def test_duplicate_single_point(self):
        pts = [(0.0, 0.0)] * 5
        centers = kmeans(pts, 1, seed=0)
        assert centers.shape == (1, 2)
        assert tuple(centers[0]) == (0.0, 0.0)

    def test_two_tight_blobs(self, rng):
        blob_a = rng.normal((10, 10), 0.5, size=(40, 2))
        blob_b = rng.normal((200, 200), 0.5, size=(40, 2))
        pts = np.vstack([blob_a, blob_b])
        centers = kmeans(pts, 2, seed=3)
        means = sorted([blob_a.mean(axis=0), blob_b.mean(axis=0)], key=tuple)
        got = sorted(centers.tolist(), key=tuple)
        for g, m in zip(got, means):
            assert math.hypot(g[0] - m[0], g[1] - m[1]) < 1.0

    def test_k_equals_points(self, rng):
        pts = rng.integers(0, 100, size=(4, 2)).astype(float)
        pts = np.unique(pts, axis=0)
        centers = kmeans(pts, len(pts), seed=1)
        assert sorted(map(tuple, centers)) == sorted(map(tuple, pts))

    def test_empty_points(self):
        assert kmeans(np.empty((0, 2)), 3, seed=0).shape == (0, 2)

    def test_objective_non_increasing(self, rng):
        for trial in range(20):
            pts = rng.random((200, 2)) * 224
            trace = []
            kmeans(pts, 3, seed=trial, trace=trace)
            assert all(a >= b - 1e-9 for a, b in zip(trace, trace[1:]))

    def test_deterministic(self, rng):
        pts = rng.random((100, 2)) * 50
        assert (kmeans(pts, 3, seed=9) == kmeans(pts, 3, seed=9)).all()


class TestAssignRobots:
    def test_identity_at_centers(self):
        pos = [(0.0, 0.0), (10.0, 10.0)]
        assignment = assign_robots(pos, pos)
        assert assignment == {0: 0, 1: 1}

    def test_swap_example(self):
        # permutation (0->1, 1->0) costs 1+1=2, identity costs 9+9=18
        assignment = assign_robots([(0, 0), (0, 10)], [(0, 9), (0, 1)])
        assert assignment == {0: 1, 1: 0}

    def test_single_pair(self):
        assert assign_robots([(5, 5)], [(40, 2)]) == {0: 0}

    def test_empty(self):
        assert assign_robots([(1, 1)], np.empty((0, 2))) == {}

    def test_matches_bruteforce_optimum(self, rng):
        for _ in range(300):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 5))
            pos = rng.random((n, 2)) * 100
            cen = rng.random((m, 2)) * 100
            assignment = assign_robots(pos, cen)
            assert len(set(assignment.values())) == len(assignment)
            got = sum(
                math.hypot(*(pos[r] - cen[c])) for r, c in assignment.items()
            )
            # exhaustive optimum over injective assignments
            k = min(n, m)
            best = min(
                sum(math.hypot(*(pos[rows[i]] - cen[cols[i]])) for i in range(k))
                for rows in itertools.permutations(range(n), k)
                for cols in itertools.permutations(range(m), k)
            )
            assert got == pytest.approx(best, abs=1e-9)


class TestLawnmower:
    def test_full_coverage_on_rooms(self):
        for seed in range(5):
            grid = generate_room(RoomSpec(), seed=seed)
            world = World(grid)
            log = run_mission("lawnmower", world, OracleEndpoint(grid_to_rgb(grid)), seed=1)
            assert log.final_coverage == 1.0
            assert log.stop_reason == "policy_done"

    def test_strip_starts(self):
        world = empty_world()
        policy = LawnmowerPolicy(world, ExploreParams())
        starts = policy.initial_positions(world, None)
        assert starts == [(24.0, 24.0), (99.0, 24.0), (174.0, 24.0)]

    def test_coverage_non_decreasing_and_robots_in_grid(self):
        grid = generate_room(RoomSpec(), seed=2)
        world = World(grid)
        log = run_mission("lawnmower", world, OracleEndpoint(grid_to_rgb(grid)), seed=0)
        covs = [r.coverage for r in log.rows]
        assert all(a <= b + 1e-12 for a, b in zip(covs, covs[1:]))
        for row in log.rows:
            for x, y in row.positions:
                assert 0 <= x < world.width and 0 <= y < world.height


class TestKMeansPolicies:
    def test_all_observed_done_immediately(self):
        world = empty_world()
        policy = KMeansPolicy("u", world, ExploreParams())
        belief = new_belief(world, [(10.0, 10.0)] * 3)
        belief = type(belief)(
            np.ones_like(belief.observed), grid_to_rgb(world.truth).pixels,
            belief.robot_positions,
        )
        rngs = {"kmeans": np.random.default_rng(0), "noise": np.random.default_rng(0)}
        _, plan, done = policy.step(world, belief, OracleEndpoint(grid_to_rgb(world.truth)), rngs)
        assert done and plan is None

    def test_u2_equals_u_with_zero_uncertainty(self):
        grid = generate_room(RoomSpec(), seed=4)
        world = World(grid)
        img = grid_to_rgb(grid)
        log_u = run_mission("kmeans_u", world, OracleEndpoint(img), seed=11)
        log_u2 = run_mission("kmeans_u2", world, OracleEndpoint(img), seed=11)
        assert log_u.steps == log_u2.steps
        for a, b in zip(log_u.rows, log_u2.rows):
            assert a.step == b.step
            assert a.coverage == b.coverage
            assert a.accuracy == b.accuracy
            assert a.positions == b.positions
            assert a.centers == b.centers

    def test_kmeans_r_ends_at_map_center(self):
        grid = generate_room(RoomSpec(), seed=6)
        world = World(grid)
        img = grid_to_rgb(grid)
        log = run_mission("kmeans_r", world, OracleEndpoint(img), seed=3)
        assert log.stop_reason == "policy_done"
        center = ((world.width - 1) / 2, (world.height - 1) / 2)
        for x, y in log.rows[-1].positions:
            assert math.hypot(x - center[0], y - center[1]) < 1e-6

    def test_oracle_accuracy_95_at_step_one(self):
        for policy in ("lawnmower", "kmeans_u", "kmeans_r", "kmeans_u2"):
            grid = generate_room(RoomSpec(), seed=8)
            world = World(grid)
            log = run_mission(policy, world, OracleEndpoint(grid_to_rgb(grid)), seed=2)
            assert log.rows[0].accuracy >= 0.95
            assert log.step_at_95 == 1

    def test_noisy_oracle_mission_runs(self):
        grid = generate_room(RoomSpec(), seed=9)
        world = World(grid)
        log = run_mission("kmeans_u2", world, NoisyOracleEndpoint(grid, 0.1), seed=5)
        assert log.steps > 1
        assert log.stop_reason in ("policy_done", "step_cap")

    def test_unknown_policy_rejected(self):
        world = empty_world()
        with pytest.raises(ValueError):
            make_policy("random_walk", world, ExploreParams())


class TestDeterminism:
    def test_same_seed_same_log(self):
        grid = generate_room(RoomSpec(), seed=12)
        world = World(grid)
        a = run_mission("kmeans_u", world, NearestFillEndpoint(), seed=21)
        b = run_mission("kmeans_u", world, NearestFillEndpoint(), seed=21)
        assert a.rows == b.rows

    def test_different_seed_different_placement(self):
        grid = generate_room(RoomSpec(), seed=12)
        world = World(grid)
        a = run_mission("kmeans_u", world, NearestFillEndpoint(), seed=1)
        b = run_mission("kmeans_u", world, NearestFillEndpoint(), seed=2)
        assert a.rows[0].positions != b.rows[0].positions
