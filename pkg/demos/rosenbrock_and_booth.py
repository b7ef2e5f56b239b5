"""Rotating two-dimensional test functions onto steeper points of their level sets.

Rosenbrock and Booth are invariant under rotations of a linear change of
coordinates. Teleporting along those rotations before a gradient step makes
plain GD noticeably faster on both.

    python demos/rosenbrock_and_booth.py [--plot out.png]
"""
import argparse

import numpy as np

from symtele import preset
from symtele.experiments import run_config, run_variant


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--plot", help="save a loss-curve figure here (needs matplotlib)")
    args = parser.parse_args()

    cfg = preset("rosenbrock")
    plain, tele = run_variant(cfg, 0, False), run_variant(cfg, 0, True)
    print(f"Rosenbrock from {cfg.init}, lr {cfg.lr}, teleport every 100 steps")
    for t in (0, 99, 100, 199, 500, 999):
        mark = "*" if tele.records[t].teleported else " "
        print(f"  step {t:4d}{mark} GD {plain.records[t].loss:10.5f}   "
              f"GD+teleport {tele.records[t].loss:10.5f}")
    gains = [r.improvement for r in tele.reports]
    print(f"  |grad|^2 grew by x{min(gains):.1f} to x{max(gains):.1f} at the teleports")

    cfg = preset("booth")
    res = run_config(cfg)
    base = res["baseline"][0].records[-1].loss
    finals = np.array([r.records[-1].loss for r in res["teleport"].values()])
    print(f"\nBooth, {cfg.t_max} steps at lr {cfg.lr}, one teleport before step {cfg.schedule[0]}")
    print(f"  plain GD final loss {base:.4f}")
    print(f"  with teleport: median {np.median(finals):.4f} over {finals.size} random starting "
          f"angles (min {finals.min():.4f}, max {finals.max():.4f})")

    if args.plot:
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
        ax[0].semilogy(plain.losses, label="GD")
        ax[0].semilogy(tele.losses, label="GD + teleport")
        ax[0].set_title("Rosenbrock")
        ax[1].semilogy(res["baseline"][0].losses, label="GD")
        for r in res["teleport"].values():
            ax[1].semilogy(r.losses, color="C1", alpha=0.3)
        ax[1].set_title("Booth (20 angle draws)")
        for a in ax:
            a.set_xlabel("step")
            a.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"\nsaved {args.plot}")


if __name__ == "__main__":
    main()
