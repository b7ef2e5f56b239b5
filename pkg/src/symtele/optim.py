"""GD / SGD / AdaGrad with teleportation hooks and per-epoch trajectory logs."""
import enum
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .teleport import teleport, teleport_sgd_epoch

log = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-10
CONVERGENCE_TOL = 1e-3
CONVERGENCE_MAX_STEPS = 2000


class Kind(enum.Enum):
    GD = "gd"
    SGD = "sgd"
    ADAGRAD = "adagrad"


@dataclass
class OptimizerState:
    """Optimizer hyperparameters plus AdaGrad's running sum of squared gradients.

    ``reset_on_teleport`` zeroes the AdaGrad accumulator after every
    successful teleport (off by default; kept as an ablation switch).
    """

    kind: Kind
    lr: float
    epsilon: float = ADAGRAD_EPS
    accum: np.ndarray = None
    reset_on_teleport: bool = False

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = Kind(self.kind)
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.kind is Kind.ADAGRAD and not self.epsilon > 0:
            raise ValueError("AdaGrad epsilon must be positive")

    def step(self, w, grad):
        if self.kind is not Kind.ADAGRAD:
            return w - self.lr * grad
        if self.accum is None:
            self.accum = np.zeros_like(w)
        self.accum += grad * grad
        return w - self.lr * grad / (np.sqrt(self.accum) + self.epsilon)

    def preconditioner(self, size):
        """Diagonal of the effective learning-rate matrix at the current step."""
        if self.kind is not Kind.ADAGRAD:
            return np.full(size, self.lr)
        accum = np.zeros(size) if self.accum is None else self.accum
        return self.lr / (np.sqrt(accum) + self.epsilon)

    def fresh(self):
        return OptimizerState(self.kind, self.lr, self.epsilon, None, self.reset_on_teleport)


@dataclass
class TrajectoryRecord:
    epoch: int
    loss: float
    grad_norm_sq: float
    wall_time_s: float
    teleported: bool = False
    diverged: bool = False
    val_loss: float = None


@dataclass
class TrainResult:
    records: list
    w: np.ndarray
    reports: list = field(default_factory=list)

    @property
    def diverged(self):
        return bool(self.records) and self.records[-1].diverged

    @property
    def losses(self):
        return np.array([r.loss for r in self.records])

    @property
    def grad_norms(self):
        return np.array([r.grad_norm_sq for r in self.records])


def _bad(x):
    return not math.isfinite(x)


def train(model, w0, opt, tcfg=None, t_max=100, rng=None, stop=None):
    """Full-batch training for ``t_max`` epochs, teleporting at scheduled epochs.

    Record ``t`` holds the loss and squared gradient norm at ``w_t`` (after any
    teleport, before the step). A non-finite loss ends the run with a final
    record flagged ``diverged``. ``stop(records)`` may end the run early.
    """
    w = np.array(w0, dtype=np.float64)
    records, reports = [], []
    start = time.perf_counter()
    schedule = tcfg.schedule if tcfg is not None else frozenset()
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(t_max):
            teleported = False
            if t in schedule:
                w, rep = teleport(model, w, tcfg, rng)
                reports.append(rep)
                teleported = True
                if opt.reset_on_teleport and not rep.reverted:
                    opt.accum = None
                loss, g = rep.loss_after, rep.grad_after
            else:
                loss, g = model.loss_grad(w)
            gn = float(g @ g)
            diverged = _bad(loss) or _bad(gn)
            records.append(TrajectoryRecord(t, float(loss), gn, time.perf_counter() - start,
                                            teleported, diverged))
            if diverged:
                log.info("diverged at epoch %d", t)
                break
            if stop is not None and stop(records):
                break
            w = opt.step(w, g)
    return TrainResult(records, w, reports)


def make_batches(X, Y, batch_size, rng):
    """Shuffle the sample columns and cut them into mini-batches."""
    n = X.shape[1]
    order = rng.permutation(n)
    return [(X[:, order[i:i + batch_size]], Y[:, order[i:i + batch_size]])
            for i in range(0, n, batch_size)]


def train_sgd(model, w0, opt, tcfg, data, t_max, batch_size, rng, val_data=None):
    """Mini-batch SGD (or AdaGrad) following the SGD teleportation loop.

    ``model`` is bound to the full training set ``data = (X, Y)``; batches
    are rebound per step. At epochs in the schedule the first
    ``tcfg.batches`` mini-batches each get a teleport before their step.
    Record ``t`` is the full-training-set loss after epoch ``t``.
    """
    X, Y = data
    w = np.array(w0, dtype=np.float64)
    records, reports = [], []
    schedule = tcfg.schedule if tcfg is not None else frozenset()
    full = model.with_data(X, Y)
    val = model.with_data(*val_data) if val_data is not None else None
    start = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(t_max):
            batches = make_batches(X, Y, batch_size, rng)
            teleported = t in schedule and tcfg.batches > 0
            if teleported:
                w, reps = teleport_sgd_epoch(model, w, tcfg, batches, opt, rng)
                reports.extend(reps)
            else:
                for xb, yb in batches:
                    _, g = model.with_data(xb, yb).loss_grad(w)
                    w = opt.step(w, g)
            loss, g = full.loss_grad(w)
            gn = float(g @ g)
            diverged = _bad(loss) or _bad(gn)
            val_loss = val.loss(w) if val is not None else None
            records.append(TrajectoryRecord(t, float(loss), gn, time.perf_counter() - start,
                                            teleported, diverged, val_loss))
            if diverged:
                break
    return TrainResult(records, w, reports)


def convergence_stop(tol=CONVERGENCE_TOL):
    """Stop rule: two consecutive losses differ by less than ``tol``."""
    def stop(records):
        return len(records) >= 2 and abs(records[-1].loss - records[-2].loss) < tol
    return stop


def steps_to_converge(records, tol=CONVERGENCE_TOL, max_steps=CONVERGENCE_MAX_STEPS):
    """Index of the first record whose loss moved by less than ``tol``.

    Returns ``None`` for runs that diverge or do not converge within
    ``max_steps`` records.
    """
    for i in range(1, min(len(records), max_steps)):
        if records[i].diverged:
            return None
        if abs(records[i].loss - records[i - 1].loss) < tol:
            return i
    return None


def time_to_converge(records, tol=CONVERGENCE_TOL, max_steps=CONVERGENCE_MAX_STEPS):
    """Wall time at the convergence record, or ``None`` (see :func:`steps_to_converge`)."""
    i = steps_to_converge(records, tol, max_steps)
    return None if i is None else records[i].wall_time_s
