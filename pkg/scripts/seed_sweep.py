#!/usr/bin/env python3
"""Train one config across several seeds and tabulate the outcomes.

Example:

    python3 scripts/seed_sweep.py --config worlds/smoke.cfg --seeds 1 2 3 \
        --out runs/smoke_sweep

Writes runs/smoke_sweep/seed<N>/ per run plus sweep.csv with one summary
row per seed, and prints the same table to stdout.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from pponav.config import load_config, with_seed
from pponav.harness import run_eval, run_train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--out", required=True, help="sweep output directory")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--eval-episodes", type=int, default=100)
    ap.add_argument("--stochastic", action="store_true",
                    help="sample eval actions instead of argmax")
    args = ap.parse_args()

    cfg = load_config(args.config)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    rows = []
    for seed in args.seeds:
        run_dir = out_root / f"seed{seed}"
        print(f"== seed {seed} -> {run_dir}", flush=True)
        result = run_train(with_seed(cfg, seed), run_dir,
                           workers=args.workers, progress=sys.stdout)
        ev = run_eval(run_dir / "checkpoint_final.ckpt",
                      episodes=args.eval_episodes, seed=0, mode="test",
                      stochastic=args.stochastic)
        rows.append((seed, result.stop_reason, result.iterations,
                     result.final_goal_rate, ev.goal_rate, ev.mean_return))

    header = "seed,stop_reason,iterations,train_goal_rate,eval_goal_rate,eval_mean_return"
    lines = [header] + [
        f"{s},{reason},{it},{tr:.4f},{er:.4f},{ret:.1f}"
        for s, reason, it, tr, er, ret in rows]
    (out_root / "sweep.csv").write_text("\n".join(lines) + "\n")
    print()
    for line in lines:
        print(line.replace(",", "\t"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
