"""Command-line front end.

Subcommands: ``gen-maps``, ``fov-eval``, ``explore``, ``navigate``, and
``serve-check``. All accept ``--config FILE`` (JSON, strict keys) plus flags
that override file values. The ``MAPSIGHT_PREDICTOR_ADDR`` environment
variable overrides the predictor with ``wire:<addr>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import harness
from .harness import Config, ConfigError
from .predictor import PredictorError, make_endpoint
from .worldgen import WorldGenError


def _load_config(args) -> Config:
    cfg = Config.from_file(args.config) if args.config else Config()
    overrides = {}
    for name in ("seed", "out_dir", "predictor", "workers"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides) if overrides else cfg


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int, help="root seed")
    sub.add_argument("--out-dir", dest="out_dir", help="output directory")
    sub.add_argument(
        "--predictor",
        help="mock:oracle | mock:nearest | mock:noisy:<rate> | wire:<addr> | stdio:<cmd>",
    )
    sub.add_argument("--workers", type=int, help="worker pool size (0 = cpu count)")


def _cmd_gen_maps(args) -> int:
    cfg = _load_config(args)
    if args.count is not None:
        cfg = replace(cfg, gen_maps=replace(cfg.gen_maps, count=args.count))
    paths = harness.run_gen_maps(cfg)
    print(f"gen-maps: wrote {len(paths)} maps to {cfg.out_dir}")
    return 0


def _cmd_fov(args) -> int:
    cfg = _load_config(args)
    fov = cfg.fov
    if args.dataset is not None:
        fov = replace(fov, dataset=args.dataset)
    if args.count is not None:
        fov = replace(fov, count=args.count)
    cfg = replace(cfg, fov=fov)
    rows, summary = harness.run_fov(cfg)
    print(f"fov-eval: {len(rows)} metric rows, {len(summary)} groups -> {cfg.out_dir}")
    return 0


def _cmd_explore(args) -> int:
    cfg = _load_config(args)
    ex = cfg.explore
    if args.rooms is not None:
        ex = replace(ex, rooms=args.rooms)
    if args.repeats is not None:
        ex = replace(ex, repeats=args.repeats)
    if args.policies is not None:
        ex = replace(ex, policies=tuple(args.policies.split(",")))
    cfg = replace(cfg, explore=ex)
    summaries, medians = harness.run_explore(cfg)
    print(f"explore: {len(summaries)} runs -> {cfg.out_dir}; "
          f"median coverage@95 {json.dumps(medians, sort_keys=True)}")
    return 0


def _cmd_navigate(args) -> int:
    cfg = _load_config(args)
    nav = cfg.navigate
    if args.rooms is not None:
        nav = replace(nav, rooms=args.rooms)
    if args.pairs is not None:
        nav = replace(nav, pairs_per_room=args.pairs)
    cfg = replace(cfg, navigate=nav)
    _, summary = harness.run_navigate(cfg)
    print(f"navigate: {json.dumps(summary, sort_keys=True)}")
    return 0


def _cmd_serve_check(args) -> int:
    cfg = _load_config(args)
    spec = cfg.effective_predictor()
    if not spec.startswith(("wire:", "stdio:")):
        raise ConfigError(f"serve-check needs a wire or stdio predictor, got {spec!r}")
    endpoint = make_endpoint(spec)
    try:
        reply = endpoint.ping()
    finally:
        endpoint.close()
    print(json.dumps(reply, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mapsight",
        description="2D mapping simulator around pluggable inpainting predictors",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("gen-maps", help="generate synthetic ground-truth maps")
    _add_common(sub)
    sub.add_argument("--count", type=int)
    sub.set_defaults(fn=_cmd_gen_maps)

    sub = subs.add_parser("fov-eval", help="periphery-masking metric sweep")
    _add_common(sub)
    sub.add_argument("--dataset", help="'synthetic' or a dataset directory")
    sub.add_argument("--count", type=int, help="synthetic item count")
    sub.set_defaults(fn=_cmd_fov)

    sub = subs.add_parser("explore", help="multi-robot exploration batch")
    _add_common(sub)
    sub.add_argument("--rooms", type=int)
    sub.add_argument("--repeats", type=int)
    sub.add_argument("--policies", help="comma-separated policy list")
    sub.set_defaults(fn=_cmd_explore)

    sub = subs.add_parser("navigate", help="paired predictive/baseline navigation")
    _add_common(sub)
    sub.add_argument("--rooms", type=int)
    sub.add_argument("--pairs", type=int, help="start/goal pairs per room")
    sub.set_defaults(fn=_cmd_navigate)

    sub = subs.add_parser("serve-check", help="ping the predictor service")
    _add_common(sub)
    sub.set_defaults(fn=_cmd_serve_check)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, PredictorError, WorldGenError, ValueError, OSError) as exc:
        print(f"mapsight: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
