"""Command-line driver: experiment runs, sweeps, runtime scaling and the check suite.

Every command that writes results also writes the fully resolved
``config.json``; passing it back with ``--config`` repeats the experiment.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

from .checks import main_report
from .experiments import (PRESETS, SCHEDULE_FAMILIES, VARIANTS, ExperimentConfig, preset,
                          run_config, scaling_config, summarize, sweep_config)

log = logging.getLogger("symtele")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CHECK_FAILED = 2

RUN_HEADER = ("epoch", "wall_time_s", "loss", "grad_norm_sq", "teleported")
SUMMARY_HEADER = ("variant", "epoch", "n", "loss_mean", "loss_std",
                  "grad_norm_sq_mean", "grad_norm_sq_std")
TELEPORT_HEADER = ("seed", "index", "loss_before", "loss_after", "grad_norm_sq_before",
                   "grad_norm_sq_after", "reverted", "wall_time_s")
VALIDATION_HEADER = ("epoch", "val_loss")
SWEEP_HEADER = ("optimizer", "seed", "lr", "steps", "converged", "steps_baseline",
                "steps_teleport", "t_baseline_s", "t_teleport_s", "speedup")
SCALING_HEADER = ("axis", "value", "width", "depth", "seed", "total_wall_time_s",
                  "teleport_wall_time_s", "descent_wall_time_s", "teleports", "epochs",
                  "diverged")


class ConfigError(Exception):
    """Bad flags, config file or input paths (exit code 1)."""


def _cell(v):
    # repr round-trips floats exactly, so reruns compare byte for byte
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    """Write ``rows`` (sequences or dicts keyed by ``header``) atomically."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(k) for k in header]
        writer.writerow([_cell(v) for v in row])
    _atomic_write(path, buf.getvalue())


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_config(args):
    """Build the ExperimentConfig from ``--preset``/``--config`` plus overrides."""
    if (args.preset is None) == (args.config is None):
        raise ConfigError("give exactly one of --preset or --config")
    if (args.mnist_images is None) != (args.mnist_labels is None):
        raise ConfigError("--mnist-images and --mnist-labels go together")
    try:
        cfg = preset(args.preset) if args.preset else ExperimentConfig.load(args.config)
        changes = {}
        if args.seed is not None:
            changes["seeds"] = [args.seed]
        if args.mnist_images is not None:
            for path in (args.mnist_images, args.mnist_labels):
                if not os.path.isfile(path):
                    raise ConfigError(f"no such file: {path}")
            changes["mnist_images"] = os.path.abspath(args.mnist_images)
            changes["mnist_labels"] = os.path.abspath(args.mnist_labels)
        return cfg.replace(**changes) if changes else cfg
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc)) from exc


def _prepare_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc


def _write_config(out, cfg):
    _atomic_write(os.path.join(out, "config.json"), cfg.to_json() + "\n")


def cmd_run(args):
    cfg = resolve_config(args)
    _prepare_out(args.out)
    _write_config(args.out, cfg)
    results = run_config(cfg, args.workers)
    teleports = []
    for variant in VARIANTS:
        for seed, res in sorted(results[variant].items()):
            stem = os.path.join(args.out, f"{variant}_seed{seed}")
            write_csv(stem + ".csv", RUN_HEADER,
                      [(r.epoch, r.wall_time_s, r.loss, r.grad_norm_sq, r.teleported)
                       for r in res.records])
            if any(r.val_loss is not None for r in res.records):
                write_csv(stem + "_val.csv", VALIDATION_HEADER,
                          [(r.epoch, r.val_loss) for r in res.records])
            if variant == "teleport":
                teleports += [(seed, i, rep.loss_before, rep.loss_after,
                               rep.grad_norm_sq_before, rep.grad_norm_sq_after,
                               rep.reverted, rep.wall_time_s)
                              for i, rep in enumerate(res.reports)]
            if res.diverged:
                log.warning("%s seed %d diverged at epoch %d", variant, seed,
                            res.records[-1].epoch)
    write_csv(os.path.join(args.out, "summary.csv"), SUMMARY_HEADER, summarize(results))
    write_csv(os.path.join(args.out, "teleports.csv"), TELEPORT_HEADER, teleports)
    for row in summarize(results):
        if row["epoch"] == cfg.t_max - 1:
            print(f"{row['variant']:>9}  final loss {row['loss_mean']:.6g} "
                  f"+- {row['loss_std']:.2g}  (n={row['n']})")
    return EXIT_OK


def cmd_sweep(args):
    cfg = resolve_config(args)
    if not cfg.sweep_lrs or not cfg.sweep_steps:
        raise ConfigError(f"config {cfg.name!r} has no sweep grid")
    _prepare_out(args.out)
    _write_config(args.out, cfg)
    rows = sweep_config(cfg, args.workers)
    write_csv(os.path.join(args.out, "sweep.csv"), SWEEP_HEADER, rows)
    good = [r for r in rows if r["converged"]]
    print(f"{len(good)}/{len(rows)} cells converged; "
          f"{sum(r['speedup'] > 1 for r in good)} with wall-clock speedup > 1")
    return EXIT_OK


def cmd_scaling(args):
    cfg = resolve_config(args)
    if not cfg.widths and not cfg.depths:
        raise ConfigError(f"config {cfg.name!r} has no width or depth axis")
    _prepare_out(args.out)
    _write_config(args.out, cfg)
    # timings run one at a time so that runs do not compete for the CPU
    rows = scaling_config(cfg)
    write_csv(os.path.join(args.out, "scaling.csv"), SCALING_HEADER, rows)
    for r in rows:
        print(f"{r['axis']} {r['value']:>4}: teleport {r['teleport_wall_time_s']:.3f}s, "
              f"total {r['total_wall_time_s']:.3f}s")
    return EXIT_OK


def cmd_theory_check(args):
    results, text = main_report(fault=args.fault, seed=args.seed or 0)
    print(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def _experiment_flags(p):
    p.add_argument("--preset", help="named preset (see 'symtele presets')")
    p.add_argument("--config", help="JSON config, e.g. a config.json from an earlier run")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="run this single seed instead of the config's")
    p.add_argument("--workers", type=int, default=1, help="parallel processes")
    p.add_argument("--mnist-images", help="IDX image file (optionally .gz)")
    p.add_argument("--mnist-labels", help="IDX label file (optionally .gz)")


def cmd_presets(args):
    for name in PRESETS:
        print(name)
    print("sweep-gd\nsweep-adagrad")
    for family in SCHEDULE_FAMILIES:
        print(family)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="symtele", description="Symmetry teleportation experiments and checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in (("run", cmd_run, "baseline and teleporting runs, per seed"),
                           ("sweep", cmd_sweep, "teleport lr x steps grid, time to converge"),
                           ("scaling", cmd_scaling, "teleport wall time vs width/depth")):
        p = sub.add_parser(name, help=text)
        _experiment_flags(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("theory-check", help="run the invariant and theory checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fault", action="store_true",
                   help="perturb the group actions; the checks should then fail")
    p.set_defaults(func=cmd_theory_check)
    p = sub.add_parser("presets", help="list preset names")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        # unreadable or malformed inputs surface here (e.g. a bad IDX file)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
