"""Experiment presets and drivers: runs, hyperparameter sweeps, runtime scaling.

An :class:`ExperimentConfig` holds every knob of one experiment and
round-trips through JSON. ``run_config`` trains a plain and a teleporting
variant per seed; ``sweep_config`` and ``scaling_config`` produce the grid
and timing tables.
"""
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import RNG_NAME, make_rng, mnist_split, synth_regression
from .mlp import Mode, MlpModel, fanin_params
from .optim import (ADAGRAD_EPS, CONVERGENCE_MAX_STEPS, CONVERGENCE_TOL, OptimizerState,
                    convergence_stop, steps_to_converge, train, train_sgd)
from .teleport import TeleportConfig
from .testfns import RotationModel, by_name

TESTFN_FAMILIES = ("rosenbrock", "booth", "ellipse")
FAMILIES = TESTFN_FAMILIES + ("mlp", "mnist")


@dataclass
class ExperimentConfig:
    name: str
    family: str
    optimizer: str = "gd"
    lr: float = 1e-3
    epsilon: float = ADAGRAD_EPS
    reset_on_teleport: bool = False
    t_max: int = 100
    seeds: list = field(default_factory=lambda: [0])
    # test functions
    init: list = None
    ellipse_a: float = None
    theta_init: list = None
    # networks: widths [d0, ..., dp]
    dims: list = None
    n_samples: int = 4
    loss: str = "mse"
    slope: float = 0.1
    # teleportation
    schedule: list = field(default_factory=list)
    ascent_steps: int = 10
    ascent_lr: float = 0.1
    batches: int = 1
    mode: str = "exact"
    max_loss_drift: float = None
    # mini-batch runs
    batch_size: int = 20
    train_size: int = 4096
    holdout: int = None
    split_seed: int = 0
    mnist_images: str = None
    mnist_labels: str = None
    # sweep
    sweep_lrs: list = None
    sweep_steps: list = None
    converge_tol: float = CONVERGENCE_TOL
    converge_max_steps: int = CONVERGENCE_MAX_STEPS
    timing_repeats: int = 3
    # runtime scaling
    widths: list = None
    depths: list = None
    scaling_width: int = 32
    scaling_depth: int = 3
    rng: str = RNG_NAME

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if any(not 0 <= k < self.t_max for k in self.schedule):
            raise ValueError(f"schedule epochs must lie in [0, {self.t_max})")
        if self.family in ("mlp", "mnist") and (not self.dims or len(self.dims) < 3):
            raise ValueError("network experiments need dims [d0, hidden..., dp] with a hidden layer")
        self.teleport_config()
        self.optimizer_state()

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def teleport_config(self, schedule=None, ascent_steps=None, ascent_lr=None):
        return TeleportConfig(
            schedule=frozenset(self.schedule if schedule is None else schedule),
            ascent_steps=self.ascent_steps if ascent_steps is None else ascent_steps,
            ascent_lr=self.ascent_lr if ascent_lr is None else ascent_lr,
            batches=self.batches, mode=Mode(self.mode), max_loss_drift=self.max_loss_drift)

    def optimizer_state(self):
        return OptimizerState(self.optimizer, self.lr, self.epsilon,
                              reset_on_teleport=self.reset_on_teleport)


# ---------------------------------------------------------------- presets

def _mlp_regression(name, optimizer, lr, steps, ascent_lr):
    # Squared error is averaged over the output entries; see README.
    return ExperimentConfig(
        name=name, family="mlp", optimizer=optimizer, lr=lr, t_max=300,
        seeds=[0, 1, 2, 3, 4], dims=[5, 6, 7, 8], n_samples=4, loss="mean_mse",
        schedule=[5], ascent_steps=steps, ascent_lr=ascent_lr, mode="first_order",
        sweep_lrs=[1e-9, 1e-8, 1e-7, 1e-6, 1e-5], sweep_steps=[1, 2, 4, 8, 16, 32])


def _mnist(name="mnist", schedule=(1,), batches=4, t_max=10):
    return ExperimentConfig(
        name=name, family="mnist", optimizer="sgd", lr=2e-3, t_max=t_max, seeds=[0, 1, 2],
        dims=[784, 64, 64, 10], loss="xent", schedule=list(schedule), ascent_steps=10,
        ascent_lr=1e-3, batches=batches, mode="first_order", batch_size=20, train_size=4096)


def _scaling(name, widths=None, depths=None):
    return ExperimentConfig(
        name=name, family="mlp", optimizer="gd", lr=1e-4, t_max=300, seeds=[0],
        loss="mean_mse", dims=[32, 32, 32, 32], schedule=list(range(0, 300, 10)),
        # timing uses the exact inverse, the action the cost model describes
        ascent_steps=10, ascent_lr=1e-6, mode="exact",
        widths=widths, depths=depths, scaling_width=32, scaling_depth=3)


def _presets():
    return {
        "rosenbrock": ExperimentConfig(
            name="rosenbrock", family="rosenbrock", lr=1e-3, t_max=1000, init=[-1.0, -1.0],
            schedule=list(range(100, 1000, 100)), ascent_steps=10, ascent_lr=0.1),
        "booth": ExperimentConfig(
            name="booth", family="booth", lr=0.08, t_max=10, seeds=list(range(20)),
            init=[5.0, -5.0], theta_init=[0.0, math.pi], schedule=[5], ascent_steps=10,
            ascent_lr=1e-3),
        "ellipse": ExperimentConfig(
            name="ellipse", family="ellipse", ellipse_a=4.0, lr=0.05, t_max=50,
            init=[2.0, 0.2], schedule=[0], ascent_steps=50, ascent_lr=1e-2),
        "mlp-gd": _mlp_regression("mlp-gd", "gd", 1e-4, 8, 1e-7),
        "mlp-adagrad": _mlp_regression("mlp-adagrad", "adagrad", 1e-1, 2, 1e-5),
        "mnist": _mnist(),
        "scaling-width": _scaling("scaling-width", widths=[16, 32, 64, 128]),
        "scaling-depth": _scaling("scaling-depth", depths=[2, 3, 4, 5, 6, 7, 8]),
    }


PRESETS = tuple(_presets())
SCHEDULE_FAMILIES = ("mnist-epoch-<k>", "mnist-interval-<i>", "mnist-batches-<B>")


def preset(name):
    """Named preset, including the mini-batch schedule families.

    ``mnist-epoch-<k>``: one teleporting epoch ``k`` (4 mini-batches).
    ``mnist-interval-<i>``: five teleporting epochs ``1, 1+i, ...``.
    ``mnist-batches-<B>``: teleport with ``B`` mini-batches after epoch 1.
    """
    table = _presets()
    if name in table:
        return table[name]
    if name.startswith("sweep-"):
        base = "mlp-" + name[len("sweep-"):]
        if base in table:
            return table[base].replace(name=name)
    for prefix in ("mnist-epoch-", "mnist-interval-", "mnist-batches-"):
        if name.startswith(prefix):
            try:
                k = int(name[len(prefix):])
            except ValueError:
                break
            if k < 0 or (prefix == "mnist-interval-" and k < 1):
                break
            if prefix == "mnist-epoch-":
                return _mnist(name, schedule=(k,), t_max=max(10, k + 1))
            if prefix == "mnist-interval-":
                sched = [1 + k * j for j in range(5)]
                return _mnist(name, schedule=sched, t_max=max(10, sched[-1] + 1))
            return _mnist(name, batches=k)
    raise ValueError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}, "
                     f"sweep-gd, sweep-adagrad, {', '.join(SCHEDULE_FAMILIES)}")


# ------------------------------------------------------------- instances

@dataclass
class Instance:
    """A model bound to its training data plus the starting point."""

    model: object
    w0: np.ndarray
    data: tuple = None
    val_data: tuple = None


def build_instance(cfg, seed):
    if cfg.family in TESTFN_FAMILIES:
        fn = by_name(cfg.family, cfg.ellipse_a)
        theta = tuple(cfg.theta_init) if cfg.theta_init is not None else None
        return Instance(RotationModel(fn, theta), np.array(cfg.init, dtype=np.float64))
    if cfg.family == "mlp":
        ds, params = synth_regression(seed, cfg.dims[0], cfg.dims[1:], cfg.n_samples, cfg.slope)
        model = MlpModel(params, ds.inputs, ds.targets, cfg.loss)
        return Instance(model, params.to_vec(), (ds.inputs, ds.targets))
    train_ds, val_ds = mnist_split(cfg.split_seed, cfg.train_size, cfg.holdout,
                                   cfg.mnist_images, cfg.mnist_labels)
    if train_ds.inputs.shape[0] != cfg.dims[0] or train_ds.targets.shape[0] != cfg.dims[-1]:
        raise ValueError(f"dims {cfg.dims} do not match the data "
                         f"({train_ds.inputs.shape[0]} in, {train_ds.targets.shape[0]} out)")
    params = fanin_params(make_rng(seed), cfg.dims, cfg.slope)
    model = MlpModel(params, train_ds.inputs, train_ds.targets, cfg.loss)
    return Instance(model, params.to_vec(), (train_ds.inputs, train_ds.targets),
                    (val_ds.inputs, val_ds.targets) if len(val_ds) else None)


def run_variant(cfg, seed, teleporting):
    """Train one seed with or without teleportation; returns a ``TrainResult``."""
    inst = build_instance(cfg, seed)
    tcfg = cfg.teleport_config() if teleporting else None
    opt = cfg.optimizer_state()
    # training randomness (batch order, theta draws) comes from a stream
    # separate from the one that built the instance
    rng = make_rng([seed, 1])
    if cfg.family == "mnist":
        if tcfg is None:
            tcfg = cfg.teleport_config(schedule=())
        return train_sgd(inst.model, inst.w0, opt, tcfg, inst.data, cfg.t_max,
                         cfg.batch_size, rng, inst.val_data)
    return train(inst.model, inst.w0, opt, tcfg, cfg.t_max, rng)


VARIANTS = ("baseline", "teleport")


def _run_job(args):
    cfg_dict, seed, variant = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return seed, variant, run_variant(cfg, seed, variant == "teleport")


def _pool_map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_config(cfg, workers=1):
    """All (seed, variant) runs: ``{variant: {seed: TrainResult}}``."""
    jobs = [(cfg.to_dict(), seed, v) for seed in cfg.seeds for v in VARIANTS]
    out = {v: {} for v in VARIANTS}
    for seed, variant, result in _pool_map(_run_job, jobs, workers):
        out[variant][seed] = result
    return out


def summarize(results):
    """Per-epoch mean and standard deviation across seeds, per variant.

    Seeds whose run ended early (divergence) drop out of later epochs;
    ``n`` counts the seeds present.
    """
    rows = []
    for variant, by_seed in results.items():
        t_max = max(len(r.records) for r in by_seed.values())
        for t in range(t_max):
            recs = [r.records[t] for r in by_seed.values() if t < len(r.records)]
            loss = np.array([r.loss for r in recs])
            gn = np.array([r.grad_norm_sq for r in recs])
            rows.append({
                "variant": variant, "epoch": t, "n": len(recs),
                "loss_mean": float(np.mean(loss)), "loss_std": float(np.std(loss)),
                "grad_norm_sq_mean": float(np.mean(gn)), "grad_norm_sq_std": float(np.std(gn)),
            })
    return rows


def matched_grad_levels(base, tele, start=0, levels=50):
    """Compare squared gradient norms of two runs at equal loss values.

    Both loss curves (from epoch ``start`` on, assumed decreasing) are
    sampled at ``levels`` evenly spaced values strictly inside their common
    range; returns ``(loss_levels, grad_base, grad_tele)``.
    """
    lb, gb = base.losses[start:], base.grad_norms[start:]
    lt, gt = tele.losses[start:], tele.grad_norms[start:]
    lo, hi = max(lb.min(), lt.min()), min(lb.max(), lt.max())
    if not lo < hi:
        raise ValueError("the two loss curves do not overlap")
    lev = np.linspace(lo, hi, levels + 2)[1:-1]
    return lev, np.interp(lev, lb[::-1], gb[::-1]), np.interp(lev, lt[::-1], gt[::-1])


# ------------------------------------------------------------------ sweep

def _converge_run(inst, cfg, tcfg):
    opt = cfg.optimizer_state()
    start = time.perf_counter()
    res = train(inst.model, inst.w0, opt, tcfg, cfg.converge_max_steps, None,
                stop=convergence_stop(cfg.converge_tol))
    elapsed = time.perf_counter() - start
    i = steps_to_converge(res.records, cfg.converge_tol, cfg.converge_max_steps)
    return i, (res.records[i].wall_time_s if i is not None else None), elapsed


def sweep_cell(cfg, seed, ascent_lr, steps):
    """Time-to-convergence of plain and teleporting runs for one grid cell.

    The two arms are timed alternately ``cfg.timing_repeats`` times and the
    fastest time of each is kept, which damps scheduler noise.
    """
    inst = build_instance(cfg, seed)
    tcfg = cfg.teleport_config(ascent_steps=steps, ascent_lr=ascent_lr)
    base_t, tele_t = [], []
    base_i = tele_i = None
    for _ in range(max(1, cfg.timing_repeats)):
        base_i, t, _ = _converge_run(inst, cfg, None)
        base_t.append(t)
        tele_i, t, _ = _converge_run(inst, cfg, tcfg)
        tele_t.append(t)
    converged = base_i is not None and tele_i is not None
    tb = min(base_t) if base_i is not None else None
    tt = min(tele_t) if tele_i is not None else None
    return {
        "optimizer": cfg.optimizer, "seed": seed, "lr": ascent_lr, "steps": steps,
        "converged": converged, "steps_baseline": base_i, "steps_teleport": tele_i,
        "t_baseline_s": tb, "t_teleport_s": tt,
        "speedup": tb / tt if converged else None,
    }


def _sweep_job(args):
    cfg_dict, seed, lr, steps = args
    return sweep_cell(ExperimentConfig.from_dict(cfg_dict), seed, lr, steps)


def sweep_config(cfg, workers=1):
    """One row per (seed, ascent lr, ascent steps) cell."""
    if not cfg.sweep_lrs or not cfg.sweep_steps:
        raise ValueError("sweep needs nonempty sweep_lrs and sweep_steps")
    jobs = [(cfg.to_dict(), seed, lr, steps)
            for seed in cfg.seeds for lr in cfg.sweep_lrs for steps in cfg.sweep_steps]
    return _pool_map(_sweep_job, jobs, workers)


# ---------------------------------------------------------------- scaling

def _square_instance(seed, width, depth, slope, loss):
    """Square ``width x width`` weights and data, weights scaled by fan-in."""
    rng = make_rng(seed)
    X = rng.uniform(size=(width, width))
    Y = rng.uniform(size=(width, width))
    params = fanin_params(rng, [width] * (depth + 1), slope)
    return MlpModel(params, X, Y, loss), params.to_vec()


def scaling_point(cfg, seed, width, depth):
    model, w0 = _square_instance(seed, width, depth, cfg.slope, cfg.loss)
    start = time.perf_counter()
    res = train(model, w0, cfg.optimizer_state(), cfg.teleport_config(), cfg.t_max)
    total = time.perf_counter() - start
    tele = sum(r.wall_time_s for r in res.reports)
    return {"axis": None, "value": None, "width": width, "depth": depth, "seed": seed,
            "total_wall_time_s": total, "teleport_wall_time_s": tele,
            "descent_wall_time_s": total - tele, "teleports": len(res.reports),
            "epochs": len(res.records), "diverged": res.diverged}


def scaling_config(cfg):
    """Wall time of teleporting GD runs across widths and/or depths.

    After one untimed warm-up run, every point is timed ``timing_repeats``
    times in interleaved rounds and the fastest run is kept, which filters
    out scheduler noise on shared machines.
    """
    if not cfg.widths and not cfg.depths:
        raise ValueError("scaling needs widths or depths")
    points = []
    for seed in cfg.seeds:
        points += [("width", w, seed, w, cfg.scaling_depth) for w in cfg.widths or []]
        points += [("depth", d, seed, cfg.scaling_width, d) for d in cfg.depths or []]
    if points:
        _, _, seed, width, depth = points[0]
        scaling_point(cfg, seed, width, depth)
    best = [None] * len(points)
    for _ in range(max(1, cfg.timing_repeats)):
        for i, (axis, value, seed, width, depth) in enumerate(points):
            row = scaling_point(cfg, seed, width, depth)
            row.update(axis=axis, value=value)
            if best[i] is None or row["teleport_wall_time_s"] < best[i]["teleport_wall_time_s"]:
                best[i] = row
    return best


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def linear_r2(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    total = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / total) if total > 0 else 1.0
