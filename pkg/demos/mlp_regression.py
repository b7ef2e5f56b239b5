"""Teleporting a small leaky-ReLU network once, early in training.

A 5-6-7-8 network is fit to random data with GD and with AdaGrad. At epoch
5 the teleporting run moves along the GL symmetry of each adjacent pair of
weight matrices to a point with a larger gradient, then trains as usual.
Compared at equal loss, the teleported trajectory keeps the larger gradient.

    python demos/mlp_regression.py [--plot out.png]
"""
import argparse

import numpy as np

from symtele import preset
from symtele.experiments import matched_grad_levels, run_config


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--plot", help="save loss and gradient curves here (needs matplotlib)")
    args = parser.parse_args()
    results = {}
    for name in ("mlp-gd", "mlp-adagrad"):
        cfg = preset(name)
        res = results[name] = run_config(cfg)
        print(f"{name}: lr {cfg.lr}, {cfg.ascent_steps} ascent steps at {cfg.ascent_lr:g}, "
              f"{len(cfg.seeds)} seeds")
        for v in ("baseline", "teleport"):
            final = [r.records[-1].loss for r in res[v].values()]
            print(f"  {v:>9}: final loss {np.mean(final):.5f} +- {np.std(final):.5f}")
        jumps = [r.improvement for r in res["teleport"].values() for r in r.reports]
        print(f"  |grad|^2 multiplied by {np.min(jumps):.2f} to {np.max(jumps):.2f} at epoch 5")
        wins = []
        for s in cfg.seeds:
            _, g_base, g_tele = matched_grad_levels(res["baseline"][s], res["teleport"][s], 5)
            wins.append(g_tele > g_base)
        wins = np.concatenate(wins)
        print(f"  at equal loss the teleported run has the larger gradient {wins.mean():.0%} "
              f"of the time")

    if args.plot:
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(2, 2, figsize=(9, 6))
        for col, (name, res) in enumerate(results.items()):
            for v, color in (("baseline", "C0"), ("teleport", "C1")):
                loss = np.array([r.losses for r in res[v].values()])
                grad = np.array([r.grad_norms for r in res[v].values()])
                ax[0, col].plot(loss.mean(0), color=color, label=v)
                ax[0, col].fill_between(range(loss.shape[1]), loss.mean(0) - loss.std(0),
                                        loss.mean(0) + loss.std(0), color=color, alpha=0.2)
                ax[1, col].plot(loss.mean(0), grad.mean(0), color=color, label=v)
            ax[0, col].set_title(name)
            ax[0, col].set_xlabel("epoch")
            ax[0, col].set_ylabel("loss")
            ax[0, col].set_yscale("log")
            ax[1, col].set_xlabel("loss")
            ax[1, col].set_ylabel("|grad|^2")
            ax[1, col].invert_xaxis()
            ax[0, col].legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"saved {args.plot}")


if __name__ == "__main__":
    main()
