#!/usr/bin/env python3
"""Plot learning curves from a training run directory.

    python3 scripts/plot_run.py runs/base [more_runs ...] --out curves.png

Left panel: mean episode reward per iteration.  Right panel: goal /
collision / timeout rates.  Multiple run directories are overlaid (e.g. a
seed sweep).  Requires matplotlib, which is not a package dependency.
"""
import argparse
import csv
import sys
from pathlib import Path


def read_metrics(run_dir: Path) -> dict[str, list[float]]:
    cols: dict[str, list[float]] = {}
    with open(run_dir / "metrics.csv") as f:
        for row in csv.DictReader(f):
            for k, v in row.items():
                cols.setdefault(k, []).append(float(v))
    if not cols:
        raise SystemExit(f"{run_dir}/metrics.csv has no data rows")
    return cols


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("runs", nargs="+", type=Path, help="training output directories")
    ap.add_argument("--out", type=Path, default=Path("curves.png"))
    args = ap.parse_args()

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_reward, ax_rates) = plt.subplots(1, 2, figsize=(11, 4))
    for run_dir in args.runs:
        m = read_metrics(run_dir)
        label = run_dir.name
        ax_reward.plot(m["iteration"], m["mean_reward"], label=label)
        ax_rates.plot(m["iteration"], m["goal_rate"], label=f"{label} goal")
        if len(args.runs) == 1:
            ax_rates.plot(m["iteration"], m["collision_rate"], "--",
                          label="collision")
            ax_rates.plot(m["iteration"], m["timeout_rate"], ":", label="timeout")

    ax_reward.set_xlabel("iteration")
    ax_reward.set_ylabel("mean episode reward")
    ax_reward.grid(alpha=0.3)
    ax_reward.legend()
    ax_rates.set_xlabel("iteration")
    ax_rates.set_ylabel("episode outcome rate")
    ax_rates.set_ylim(-0.02, 1.02)
    ax_rates.axhline(0.8, color="gray", lw=0.8, ls="--")  # early-stop threshold
    ax_rates.grid(alpha=0.3)
    ax_rates.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
