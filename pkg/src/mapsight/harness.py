"""Experiment orchestration: configuration, batch runners, and report files.

Runs are fully determined by (config, seed): every random draw comes from a
named sub-stream of the root seed, floats are formatted with a fixed rule,
and batch results are aggregated in task order, so re-running a task with the
same config yields byte-identical CSV/JSON outputs.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import exploration, navigation
from .gridmap import (
    BINARY_COLORMAP,
    EXPLORE_COLORMAP,
    FREE,
    RgbImage,
    SemanticGrid,
    expansion_factor,
    grid_to_rgb,
    periphery_mask,
    rgb_to_grid,
    save_grid,
)
from .metrics import FULL_IMAGE, MASKED_ONLY, MetricReport
from .predictor import PredictRequest, WireEndpoint, make_endpoint, predict
from .seeding import child_seed, substream
from .worldgen import RoomSpec, generate_room, ingest_dataset, to_binary

ENV_PREDICTOR_ADDR = "MAPSIGHT_PREDICTOR_ADDR"

TASKS = ("gen-maps", "fov", "explore", "navigate")


class ConfigError(Exception):
    pass


def _check_keys(obj: dict, allowed, where: str) -> None:
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


@dataclass
class FovConfig:
    dataset: str = "synthetic"        # "synthetic" or a dataset directory path
    count: int = 20                   # synthetic item count
    modalities: tuple[str, ...] = ("semantic", "binary")
    ks: tuple[int, ...] = (1, 2, 3)
    room_spec: RoomSpec = field(default_factory=RoomSpec)

    @classmethod
    def from_obj(cls, obj: dict) -> "FovConfig":
        _check_keys(obj, ("dataset", "count", "modalities", "ks", "room_spec"), "fov")
        kw = dict(obj)
        if "room_spec" in kw:
            kw["room_spec"] = RoomSpec.from_json_obj(kw["room_spec"])
        for k in ("modalities", "ks"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


@dataclass
class ExploreConfig:
    rooms: int = 50
    repeats: int = 10
    policies: tuple[str, ...] = exploration.POLICIES
    n_robots: int = 3
    footprint: int = 48
    step_len: float = 16.0
    n_boot: int = 8
    sigma: float = 2.0
    tau: float = 25.0
    accuracy_target: float = 0.95
    step_cap: int = 500
    room_spec: RoomSpec = field(default_factory=RoomSpec)

    @classmethod
    def from_obj(cls, obj: dict) -> "ExploreConfig":
        _check_keys(
            obj,
            ("rooms", "repeats", "policies", "n_robots", "footprint", "step_len",
             "n_boot", "sigma", "tau", "accuracy_target", "step_cap", "room_spec"),
            "explore",
        )
        kw = dict(obj)
        if "room_spec" in kw:
            kw["room_spec"] = RoomSpec.from_json_obj(kw["room_spec"])
        if "policies" in kw:
            for p in kw["policies"]:
                if p not in exploration.POLICIES:
                    raise ConfigError(f"unknown policy {p!r}")
            kw["policies"] = tuple(kw["policies"])
        return cls(**kw)

    def params(self) -> exploration.ExploreParams:
        return exploration.ExploreParams(
            step_len=self.step_len,
            n_boot=self.n_boot,
            sigma=self.sigma,
            tau=self.tau,
            accuracy_target=self.accuracy_target,
            step_cap=self.step_cap,
        )


@dataclass
class NavigateConfig:
    rooms: int = 5
    pairs_per_room: int = 4
    modes: tuple[str, ...] = navigation.MODES
    min_separation: float = 120.0
    detour_ratio: float = 1.35  # true path cost >= ratio * euclidean distance
    footprint: int = 48
    step_cap: int = 200
    room_spec: RoomSpec = field(default_factory=lambda: RoomSpec(
        obstacle_count=(5, 9), obstacle_size=(40, 90), area_fraction=(0.05, 0.45),
        l_shape_prob=0.7))

    @classmethod
    def from_obj(cls, obj: dict) -> "NavigateConfig":
        _check_keys(
            obj,
            ("rooms", "pairs_per_room", "modes", "min_separation", "detour_ratio",
             "footprint", "step_cap", "room_spec"),
            "navigate",
        )
        kw = dict(obj)
        if "room_spec" in kw:
            kw["room_spec"] = RoomSpec.from_json_obj(kw["room_spec"])
        if "modes" in kw:
            for m in kw["modes"]:
                if m not in navigation.MODES:
                    raise ConfigError(f"unknown mode {m!r}")
            kw["modes"] = tuple(kw["modes"])
        return cls(**kw)


@dataclass
class GenMapsConfig:
    count: int = 10
    binary: bool = False
    room_spec: RoomSpec = field(default_factory=RoomSpec)

    @classmethod
    def from_obj(cls, obj: dict) -> "GenMapsConfig":
        _check_keys(obj, ("count", "binary", "room_spec"), "gen_maps")
        kw = dict(obj)
        if "room_spec" in kw:
            kw["room_spec"] = RoomSpec.from_json_obj(kw["room_spec"])
        return cls(**kw)


@dataclass
class Config:
    seed: int = 0
    out_dir: str = "out"
    predictor: str = "mock:oracle"
    workers: int = 0            # 0 = cpu count for mock endpoints
    wire_workers: int = 1       # concurrency cap when the endpoint is remote
    fov: FovConfig = field(default_factory=FovConfig)
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    navigate: NavigateConfig = field(default_factory=NavigateConfig)
    gen_maps: GenMapsConfig = field(default_factory=GenMapsConfig)

    @classmethod
    def from_obj(cls, obj: dict) -> "Config":
        _check_keys(
            obj,
            ("seed", "out_dir", "predictor", "workers", "wire_workers",
             "fov", "explore", "navigate", "gen_maps"),
            "config",
        )
        kw = dict(obj)
        for key, sub in (("fov", FovConfig), ("explore", ExploreConfig),
                         ("navigate", NavigateConfig), ("gen_maps", GenMapsConfig)):
            if key in kw:
                kw[key] = sub.from_obj(kw[key])
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "Config":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_obj(obj)

    def effective_predictor(self) -> str:
        addr = os.environ.get(ENV_PREDICTOR_ADDR)
        if addr:
            return f"wire:{addr}"
        return self.predictor

    def effective_workers(self) -> int:
        if self.effective_predictor().startswith(("wire:", "stdio:")):
            return max(1, self.wire_workers)
        if self.workers and self.workers > 0:
            return self.workers
        return os.cpu_count() or 1


def _fmt(x) -> str:
    """Fixed float formatting so outputs are byte-stable."""
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _pool_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


# ---------------------------------------------------------------------------
# gen-maps


def run_gen_maps(cfg: Config):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gm = cfg.gen_maps
    paths = []
    for i in range(gm.count):
        grid = generate_room(gm.room_spec, seed=child_seed(cfg.seed, "worldgen", i))
        if gm.binary:
            grid = to_binary(grid)
        path = out / f"map_{i:04d}.png"
        save_grid(grid, path)
        paths.append(path.name)  # relative: keeps outputs byte-stable across dirs
    write_json(out / "gen_maps_summary.json", {"count": gm.count, "maps": paths})
    return [out / p for p in paths]


# ---------------------------------------------------------------------------
# fov evaluation


def _fov_items(cfg: Config):
    """Yield (name, modality, image, grid_or_none) eval units."""
    fov = cfg.fov
    units = []
    if fov.dataset == "synthetic":
        for i in range(fov.count):
            grid = generate_room(fov.room_spec, seed=child_seed(cfg.seed, "worldgen", i))
            name = f"synthetic_{i:04d}"
            if "semantic" in fov.modalities:
                units.append((name, "semantic", grid_to_rgb(grid), grid))
            if "binary" in fov.modalities:
                bgrid = to_binary(grid)
                units.append((name, "binary", grid_to_rgb(bgrid), bgrid))
            if "rgb" in fov.modalities:
                units.append((name, "rgb", grid_to_rgb(grid), None))
        return units, []
    items, errors = ingest_dataset(fov.dataset)
    for item in items:
        if "rgb" in fov.modalities and item.rgb is not None:
            units.append((item.name, "rgb", item.rgb, None))
        if "semantic" in fov.modalities and item.semantic is not None:
            units.append((item.name, "semantic", grid_to_rgb(item.semantic), item.semantic))
        if "binary" in fov.modalities and item.binary is not None:
            units.append((item.name, "binary", grid_to_rgb(item.binary), item.binary))
    return units, errors


def _fov_one(task):
    cfg, name, modality, image, grid, k = task
    endpoint = make_endpoint(cfg.effective_predictor(), truth_image=image, truth_grid=grid)
    try:
        mask = periphery_mask(image.width // 16, k)
        out = predict(endpoint, PredictRequest(image, mask))
        out_grid = rgb_to_grid(out, grid.colormap) if grid is not None else None
        rows = []
        for region in (FULL_IMAGE, MASKED_ONLY):
            rep = MetricReport.compute(
                out, image, region, mask, pred_grid=out_grid, truth_grid=grid
            )
            rows.append((name, modality, expansion_factor(image.width, k), region,
                         rep.ssim, rep.psnr, rep.mse, rep.miou))
    except Exception as exc:  # skipped items are reported in the summary
        return [], f"{name}/{modality}/k={k}: {type(exc).__name__}: {exc}"
    finally:
        if isinstance(endpoint, WireEndpoint):
            endpoint.close()
    return rows, None


def run_fov(cfg: Config):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    units, errors = _fov_items(cfg)
    tasks = [
        (cfg, name, modality, image, grid, k)
        for (name, modality, image, grid) in units
        for k in cfg.fov.ks
    ]
    results = _pool_map(_fov_one, tasks, cfg.effective_workers())
    rows = [row for group, _ in results for row in group]
    errors.extend(err for _, err in results if err is not None)
    header = ("dataset", "modality", "expansion", "region", "ssim", "psnr", "mse", "miou")
    write_csv(out / "fov_metrics.csv", header, rows)

    groups: dict[tuple, list] = {}
    for row in rows:
        groups.setdefault((row[1], row[2], row[3]), []).append(row)
    summary = []
    for (modality, expansion, region), grp in sorted(groups.items()):
        entry = {
            "modality": modality,
            "expansion": round(expansion, 6),
            "region": region,
            "items": len(grp),
            "ssim": round(float(np.mean([g[4] for g in grp])), 6),
            "psnr": round(float(np.mean([g[5] for g in grp])), 6),
            "mse": round(float(np.mean([g[6] for g in grp])), 6),
        }
        ious = [g[7] for g in grp if g[7] is not None]
        entry["miou"] = round(float(np.mean(ious)), 6) if ious else None
        summary.append(entry)
    write_json(out / "fov_summary.json", {"groups": summary, "skipped": errors})
    return rows, summary


# ---------------------------------------------------------------------------
# exploration batch


def _mission_seed(root: int, room: int, repeat: int, policy: str) -> int:
    return child_seed(root, "mission", room, repeat, policy)


def _explore_one(task):
    cfg, room_idx, repeat, policy = task
    grid = generate_room(cfg.explore.room_spec,
                         seed=child_seed(cfg.seed, "worldgen", room_idx))
    world = exploration.World(grid, footprint=cfg.explore.footprint,
                              n_robots=cfg.explore.n_robots)
    endpoint = make_endpoint(cfg.effective_predictor(),
                             truth_image=grid_to_rgb(grid), truth_grid=grid)
    seed = _mission_seed(cfg.seed, room_idx, repeat, policy)
    try:
        log = exploration.run_mission(policy, world, endpoint, cfg.explore.params(), seed)
    except Exception as exc:  # per-run failures are recorded, batch continues
        return {"policy": policy, "room": room_idx, "repeat": repeat,
                "error": f"{type(exc).__name__}: {exc}"}, None
    finally:
        if isinstance(endpoint, WireEndpoint):
            endpoint.close()
    summary = {"room": room_idx, "repeat": repeat, **log.summary()}
    last = len(log.rows) - 1
    rows = [
        (r.step, r.coverage, r.accuracy,
         ";".join(f"{x:.3f}:{y:.3f}" for x, y in r.positions),
         ";".join(f"{x:.3f}:{y:.3f}" for x, y in r.centers),
         policy,
         log.stop_reason if i == last else "")
        for i, r in enumerate(log.rows)
    ]
    return summary, rows


MISSION_CSV_HEADER = (
    "step", "coverage", "accuracy", "positions", "centers", "policy", "stop_reason"
)


def run_explore(cfg: Config):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ex = cfg.explore
    tasks = [
        (cfg, room, repeat, policy)
        for policy in ex.policies
        for room in range(ex.rooms)
        for repeat in range(ex.repeats)
    ]
    results = _pool_map(_explore_one, tasks, cfg.effective_workers())
    summaries = []
    hist_rows = []
    for (task, (summary, rows)) in zip(tasks, results):
        _, room, repeat, policy = task
        summaries.append(summary)
        if rows is None:
            continue
        name = f"mission_{policy}_room{room:03d}_rep{repeat:02d}.csv"
        write_csv(out / name, MISSION_CSV_HEADER, rows)
        hist_rows.append(
            (policy, room, repeat, summary["coverage_at_95"],
             1 if summary["coverage_at_95"] is not None else 0)
        )
    write_json(out / "explore_runs.json", {"runs": summaries})
    write_csv(out / "coverage_at_95.csv",
              ("policy", "room", "repeat", "coverage_at_95", "reached"), hist_rows)

    medians = {}
    for policy in ex.policies:
        vals = [
            (s["coverage_at_95"] if s.get("coverage_at_95") is not None else 1.0)
            for s in summaries
            if s["policy"] == policy and "error" not in s
        ]
        medians[policy] = round(float(np.median(vals)), 6) if vals else None
    failures = [s for s in summaries if "error" in s]
    write_json(out / "explore_summary.json",
               {"median_coverage_at_95": medians, "failed_runs": len(failures)})
    return summaries, medians


# ---------------------------------------------------------------------------
# navigation batch


def sample_episode_pairs(grid: SemanticGrid, count: int, min_separation: float,
                         seed: int, detour_ratio: float = 1.0, max_tries: int = 4000):
    """Far-apart, mutually reachable start/goal pairs on free truth cells.

    ``detour_ratio`` > 1 additionally requires the true shortest path to be
    that much longer than the straight-line distance, so obstacles genuinely
    sit between the endpoints.
    """
    rng = np.random.default_rng(seed)
    free = np.argwhere(grid.labels == FREE)
    open_map = navigation.costmap_from_labels(grid.labels)
    pairs = []
    tries = 0
    while len(pairs) < count and tries < max_tries:
        tries += 1
        i, j = rng.choice(len(free), size=2, replace=False)
        (sy, sx), (gy, gx) = free[i], free[j]
        euclid = float(np.hypot(sx - gx, sy - gy))
        if euclid < min_separation:
            continue
        path = navigation.astar(open_map, (int(sx), int(sy)), (int(gx), int(gy)))
        if path is None:
            continue
        if navigation.path_cost(path) < detour_ratio * euclid:
            continue
        pairs.append(((int(sx), int(sy)), (int(gx), int(gy))))
    if len(pairs) < count:
        raise ConfigError(
            f"could not sample {count} start/goal pairs at separation {min_separation}"
            f" and detour ratio {detour_ratio}"
        )
    return pairs


def _navigate_one(task):
    cfg, room_idx, pair_idx, start, goal, mode = task
    grid = generate_room(cfg.navigate.room_spec,
                         seed=child_seed(cfg.seed, "worldgen", room_idx))
    world = exploration.World(grid, footprint=cfg.navigate.footprint, n_robots=1)
    endpoint = make_endpoint(cfg.effective_predictor(),
                             truth_image=grid_to_rgb(grid), truth_grid=grid)
    params = navigation.NavParams(step_cap=cfg.navigate.step_cap)
    try:
        ep = navigation.run_episode(world, start, goal, mode, endpoint, params)
    finally:
        if isinstance(endpoint, WireEndpoint):
            endpoint.close()
    return {
        "room": room_idx, "pair": pair_idx, "start": start, "goal": goal,
        "mode": mode, "steps": ep.steps, "status": ep.status, "fallbacks": ep.fallbacks,
        "path": ep.path,
    }


def run_navigate(cfg: Config):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nav = cfg.navigate
    tasks = []
    for room_idx in range(nav.rooms):
        grid = generate_room(nav.room_spec, seed=child_seed(cfg.seed, "worldgen", room_idx))
        pairs = sample_episode_pairs(
            grid, nav.pairs_per_room, nav.min_separation,
            seed=child_seed(cfg.seed, "placement", room_idx),
            detour_ratio=nav.detour_ratio,
        )
        for pair_idx, (start, goal) in enumerate(pairs):
            for mode in nav.modes:
                tasks.append((cfg, room_idx, pair_idx, start, goal, mode))
    results = _pool_map(_navigate_one, tasks, cfg.effective_workers())

    rows = [
        (r["room"], f"{r['start'][0]}:{r['start'][1]}", f"{r['goal'][0]}:{r['goal'][1]}",
         r["mode"], r["steps"], r["status"], r["fallbacks"])
        for r in results
    ]
    write_csv(out / "navigate_episodes.csv",
              ("world", "start", "goal", "mode", "steps", "status", "fallbacks"), rows)
    write_json(out / "navigate_paths.json",
               {"episodes": [{k: r[k] for k in ("room", "pair", "mode", "status", "path")}
                             for r in results]})

    by_mode: dict[str, list] = {m: [] for m in nav.modes}
    failed = 0
    by_key = {}
    for r in results:
        by_key[(r["room"], r["pair"], r["mode"])] = r
    for room_idx, pair_idx in sorted({(r["room"], r["pair"]) for r in results}):
        eps = [by_key[(room_idx, pair_idx, m)] for m in nav.modes]
        if any(e["status"] != "reached" for e in eps):
            failed += 1
            continue  # failed episodes excluded from the ratio, but counted
        for e in eps:
            by_mode[e["mode"]].append(e["steps"])
    n_pairs = len({(r["room"], r["pair"]) for r in results})
    summary = {
        "episodes": n_pairs,
        "excluded_pairs": failed,
        "mean_steps": {
            m: (round(float(np.mean(v)), 6) if v else None) for m, v in by_mode.items()
        },
    }
    if all(by_mode.get(m) for m in ("predictive", "baseline")):
        ratio = float(np.mean(by_mode["predictive"])) / float(np.mean(by_mode["baseline"]))
        summary["step_ratio"] = round(ratio, 6)
        summary["mean_reduction"] = round(1.0 - ratio, 6)
    write_json(out / "navigate_summary.json", summary)
    return results, summary
