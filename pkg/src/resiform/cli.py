"""Command-line entry points.

Four subcommands cover the full artifact pipeline:

    train    checkpoints + training curve for the learned controller
    eval     per-episode metric CSV for one controller on one mission
    compare  mission-by-controller table of "e_f / cr" cells
    trace    one full episode dumped as a per-step, per-drone CSV

Every artifact embeds the config hash and master seed in its header.
Configuration and mission errors exit 1 with a message on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .env import CONTROLLERS, MISSIONS, resolve_mission
from .metrics import (compare_table, run_episode, run_mission, write_eval_csv)
from .train import train_formation

CLASSICAL = tuple(c for c in CONTROLLERS if c != "gat")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="YAML config file (defaults reproduce the reference setup)")
    p.add_argument("--seed", type=int, default=0, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resiform",
        description="resilient formation control: simulate, train, evaluate")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the learned velocity controller")
    _add_common(p)
    p.add_argument("--out", type=Path, default=Path("runs/train"),
                   help="output directory for checkpoints and curves")
    p.add_argument("--mission", default="circle", choices=sorted(MISSIONS),
                   help="mission whose trajectory family seeds training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one controller on one mission")
    _add_common(p)
    p.add_argument("--out", type=Path, default=Path("eval.csv"))
    p.add_argument("--mission", default="circle")
    p.add_argument("--controller", default="gat", choices=CONTROLLERS)
    p.add_argument("--checkpoint", type=Path, default=None,
                   help="policy checkpoint (required for the learned controller)")
    p.add_argument("--episodes", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="metric table across controllers and missions")
    _add_common(p)
    p.add_argument("--out", type=Path, default=Path("compare.csv"))
    p.add_argument("--mission", action="append", default=None,
                   help="restrict to a mission (repeatable; default: all)")
    p.add_argument("--checkpoint", type=Path, default=None,
                   help="adds the learned controller column when given")
    p.add_argument("--episodes", type=int, default=10)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trace", help="dump one episode as a per-step CSV")
    _add_common(p)
    p.add_argument("--out", type=Path, default=Path("trace.csv"))
    p.add_argument("--mission", default="circle")
    p.add_argument("--controller", default="displacement", choices=CONTROLLERS)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--episodes", type=int, default=1,
                   help="episode index offset into the seed stream")
    p.set_defaults(func=cmd_trace)
    return parser


def _load(args) -> RunConfig:
    if args.config is None:
        return RunConfig()
    if not args.config.exists():
        raise FileNotFoundError(f"config not found: {args.config}")
    return load_config(args.config)


def _policy_checkpoint(args) -> Path:
    if args.checkpoint is None:
        raise ConfigError(
            "the learned controller needs --checkpoint")
    if not args.checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    return args.checkpoint


def cmd_train(cfg: RunConfig, args) -> int:
    result = train_formation(cfg, args.out, args.seed, mission=args.mission)
    print(f"trained {result.total_steps} steps; "
          f"{len(result.checkpoint_paths)} checkpoints in {result.out_dir}")
    print(f"curve: {result.curve_path}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    checkpoint = None
    if args.controller == "gat":
        checkpoint = _policy_checkpoint(args)
    report = run_mission(cfg, args.mission, args.controller, args.episodes,
                         args.seed, checkpoint=checkpoint)
    extra = {"mission": args.mission, "controller": args.controller}
    if checkpoint is not None:
        extra["checkpoint"] = checkpoint.name
    out = write_eval_csv(args.out, [report], cfg, args.seed, extra=extra)
    print(f"{args.mission}/{args.controller}: e_f={report.e_agent:.4f} "
          f"cr={report.collision_rate:.4f} over {args.episodes} episodes")
    print(f"wrote {out}")
    return 0


def cmd_compare(cfg: RunConfig, args) -> int:
    missions = args.mission or sorted(MISSIONS)
    for name in missions:
        resolve_mission(name)
    controllers = list(CLASSICAL)
    checkpoint = None
    if args.checkpoint is not None:
        checkpoint = _policy_checkpoint(args)
        controllers.append("gat")
    out = compare_table(cfg, missions, controllers, args.episodes, args.seed,
                        args.out, checkpoint=checkpoint)
    print(f"wrote {out} ({len(missions)} missions x {len(controllers)} controllers)")
    return 0


def cmd_trace(cfg: RunConfig, args) -> int:
    mission = resolve_mission(args.mission)
    policy = None
    if args.controller == "gat":
        from .metrics import load_policy
        policy = load_policy(_policy_checkpoint(args), cfg.comm.n_max)
    seeds = np.random.SeedSequence(args.seed).spawn(max(1, args.episodes))
    rng = np.random.default_rng(seeds[args.episodes - 1])
    report = run_episode(cfg, mission, args.controller, rng=rng,
                         policy=policy, trace_path=args.out,
                         trace_meta={"seed": args.seed})
    print(f"wrote {report.trace_path} "
          f"({cfg.t_max * cfg.n_agents} rows); e_f={report.e_agent:.4f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return args.func(cfg, args)
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
