"""Plot the CSV files written by ``symtele run``, ``sweep`` or ``scaling``.

    symtele run --preset mlp-gd --out runs/mlp
    python demos/plot_csv.py runs/mlp runs/mlp.png

The figure depends on what the directory holds: loss curves with a one
standard deviation band (summary.csv), a speedup heat map (sweep.csv), or
wall time against width and depth (scaling.csv).
"""
import argparse
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_summary(rows, ax):
    by = defaultdict(list)
    for r in rows:
        by[r["variant"]].append((int(r["epoch"]), float(r["loss_mean"]), float(r["loss_std"])))
    for variant, pts in by.items():
        t, m, s = map(np.array, zip(*sorted(pts)))
        ax.plot(t, m, label=variant)
        ax.fill_between(t, m - s, m + s, alpha=0.25)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.legend()


def plot_sweep(rows, ax):
    lrs = sorted({float(r["lr"]) for r in rows})
    steps = sorted({int(r["steps"]) for r in rows})
    cells = defaultdict(list)
    for r in rows:
        if r["speedup"]:
            cells[float(r["lr"]), int(r["steps"])].append(float(r["speedup"]))
    grid = np.full((len(steps), len(lrs)), np.nan)
    for (lr, k), vals in cells.items():
        grid[steps.index(k), lrs.index(lr)] = np.mean(vals)
    im = ax.imshow(grid, origin="lower", cmap="coolwarm", vmin=0, vmax=2)
    ax.set_xticks(range(len(lrs)), [f"{x:g}" for x in lrs])
    ax.set_yticks(range(len(steps)), steps)
    ax.set_xlabel("teleport learning rate")
    ax.set_ylabel("teleport steps")
    plt.colorbar(im, ax=ax, label="mean speedup (blank: did not converge)")


def plot_scaling(rows, ax):
    for axis in ("width", "depth"):
        pts = [(int(r["value"]), float(r["teleport_wall_time_s"])) for r in rows
               if r["axis"] == axis]
        if pts:
            x, y = zip(*sorted(pts))
            ax.plot(x, y, "o-", label=f"vs {axis}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_ylabel("teleport wall time (s)")
    ax.legend()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("directory")
    parser.add_argument("figure")
    args = parser.parse_args()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, fn in (("summary.csv", plot_summary), ("sweep.csv", plot_sweep),
                     ("scaling.csv", plot_scaling)):
        path = os.path.join(args.directory, name)
        if os.path.exists(path):
            fn(read(path), ax)
            break
    else:
        sys.exit(f"no summary.csv, sweep.csv or scaling.csv in {args.directory}")
    fig.tight_layout()
    fig.savefig(args.figure, dpi=120)
    print(f"saved {args.figure}")


if __name__ == "__main__":
    main()
