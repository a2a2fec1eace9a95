"""Command-line entry point.

Subcommands::

    pponav train    --config worlds/default.cfg --out runs/base [--seed N] [--workers N]
    pponav eval     --checkpoint runs/base/checkpoint_final.ckpt [--episodes 100]
                    [--seed N] [--mode test|train] [--stochastic] [--config PATH]
                    [--out outcomes.csv]
    pponav replay   --checkpoint ... --out trajectory.jsonl [--seed N] [--mode ...]
    pponav validate --config worlds/default.cfg

Configuration or checkpoint problems exit with status 2 and a one-line
message on stderr; anything else crashing is a bug and keeps its traceback.
"""
from __future__ import annotations

import argparse
import sys

from . import harness
from .config import load_config, with_seed
from .errors import CheckpointError, ConfigError, TrainingDiverged


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pponav",
        description="Train and evaluate a depth-camera goal-navigation policy.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a policy from scratch")
    train.add_argument("--config", required=True, help="run configuration file")
    train.add_argument("--seed", type=int, default=None,
                       help="override run.seed from the config")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--workers", type=int, default=1,
                       help="rollout worker processes (default 1)")

    ev = sub.add_parser("eval", help="evaluate a trained checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--mode", choices=("test", "train"), default="test",
                    help="which start/goal sampling regions to draw from")
    ev.add_argument("--stochastic", action="store_true",
                    help="sample actions instead of taking the argmax")
    ev.add_argument("--config", default=None,
                    help="override the config embedded in the checkpoint")
    ev.add_argument("--out", default=None, help="write per-episode outcomes CSV here")

    rp = sub.add_parser("replay", help="dump one greedy episode as JSON lines")
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out", required=True)
    rp.add_argument("--mode", choices=("test", "train"), default="test")
    rp.add_argument("--config", default=None)

    va = sub.add_parser("validate", help="parse and sanity-check a config file")
    va.add_argument("--config", required=True)
    return parser


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    result = harness.run_train(cfg, args.out, workers=args.workers,
                               progress=sys.stdout)
    print(f"{result.stop_reason} after {result.iterations} iterations; "
          f"final goal rate {result.final_goal_rate:.2f}; "
          f"artifacts in {result.out_dir}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    override = load_config(args.config) if args.config else None
    result = harness.run_eval(args.checkpoint, episodes=args.episodes,
                              seed=args.seed, mode=args.mode,
                              stochastic=args.stochastic, config=override)
    if args.out:
        harness.eval_outcomes_csv(result, args.out)
    print(f"episodes {result.episodes}  goal_rate {result.goal_rate:.3f}  "
          f"collision_rate {result.rate(harness.Event.COLLISION):.3f}  "
          f"timeout_rate {result.rate(harness.Event.TIMEOUT):.3f}  "
          f"mean_return {result.mean_return:.1f}  mean_steps {result.mean_steps:.1f}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    override = load_config(args.config) if args.config else None
    records = harness.replay(args.checkpoint, seed=args.seed, out_path=args.out,
                             mode=args.mode, config=override)
    total = sum(r.reward for r in records)
    print(f"wrote {len(records)} steps to {args.out} "
          f"(outcome {records[-1].event.value}, return {total:.1f})")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    w = cfg.world
    print(f"{args.config}: OK — arena {w.arena.width:g}x{w.arena.height:g} m, "
          f"{len(w.obstacles)} obstacle(s), camera {w.camera.rows}x{w.camera.cols}, "
          f"seed {cfg.seed}, max {cfg.max_iterations} iterations")
    return 0


_COMMANDS = {"train": _cmd_train, "eval": _cmd_eval,
             "replay": _cmd_replay, "validate": _cmd_validate}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, TrainingDiverged) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
