"""Symmetry teleportation: gradient ascent on group parameters.

A loss model is any object with

    loss_grad(w) -> (float, ndarray)
    group_init(w, rng) -> ndarray          # group coordinates, zeros = identity
    act(w, gparam, mode) -> ndarray        # g . w
    objective_grad(w, gparam, mode) -> (float, ndarray)
        # ||grad L(g . w)||^2 and its derivative in gparam

One teleport accumulates group coordinates against a fixed anchor ``w``, so
per-anchor work (forward passes, pseudoinverses) is done once; the next
teleport starts from the transformed point.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .mlp import Mode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TeleportConfig:
    """When and how to teleport.

    ``schedule`` holds the epochs at which teleportation happens; ``batches``
    is the number of mini-batches used per teleporting epoch in SGD training.
    ``max_loss_drift``, if set, also reverts teleports whose relative loss
    change exceeds it (the first-order action can leave the level set).
    """

    schedule: frozenset = frozenset()
    ascent_steps: int = 10
    ascent_lr: float = 0.1
    batches: int = 1
    mode: Mode = Mode.EXACT
    max_loss_drift: float = None

    def __post_init__(self):
        object.__setattr__(self, "schedule", frozenset(int(k) for k in self.schedule))
        if self.ascent_steps < 1:
            raise ValueError("ascent_steps must be at least 1")
        if not self.ascent_lr > 0:
            raise ValueError("ascent_lr must be positive")
        if self.batches < 0:
            raise ValueError("batches must be nonnegative")
        if any(k < 0 for k in self.schedule):
            raise ValueError("schedule entries must be nonnegative epochs")
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode(self.mode))
        if self.max_loss_drift is not None and not self.max_loss_drift >= 0:
            raise ValueError("max_loss_drift must be nonnegative")


@dataclass
class TeleportReport:
    loss_before: float
    loss_after: float
    grad_norm_sq_before: float
    grad_norm_sq_after: float
    reverted: bool
    wall_time_s: float
    trace: list = field(default_factory=list)
    # gradient at the returned point, so callers need not recompute it
    grad_after: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def improvement(self):
        if self.grad_norm_sq_before == 0:
            return np.inf if self.grad_norm_sq_after > 0 else 1.0
        return self.grad_norm_sq_after / self.grad_norm_sq_before


def _finite(*xs):
    for x in xs:
        if isinstance(x, float):
            if not math.isfinite(x):
                return False
        elif not np.isfinite(x).all():
            return False
    return True


def teleport(model, w, cfg, rng=None):
    """Move ``w`` along its symmetry orbit towards larger ``||grad L||^2``.

    Runs ``cfg.ascent_steps`` fixed-step ascent steps on the group
    coordinates. If the result is non-finite, does not increase the squared
    gradient norm, or drifts off the level set by more than
    ``cfg.max_loss_drift``, the original ``w`` is returned and the report is marked
    ``reverted``; numerical failures inside the ascent are handled the same
    way. Returns ``(w_new, TeleportReport)``.
    """
    start = time.perf_counter()
    w = np.asarray(w, dtype=np.float64)
    loss0, g0 = model.loss_grad(w)
    norm0 = float(g0 @ g0)
    trace = []
    with np.errstate(over="ignore", invalid="ignore"):
        gp = np.asarray(model.group_init(w, rng), dtype=np.float64)
        last = gp
        for _ in range(cfg.ascent_steps):
            try:
                objective, direction = model.objective_grad(w, gp, cfg.mode)
            except (ValueError, np.linalg.LinAlgError) as exc:
                # the last step blew up; fall back to the previous point
                log.debug("teleport ascent stopped: %s", exc)
                gp = last
                break
            if not _finite(objective, direction):
                gp = last
                break
            trace.append(float(objective))
            last = gp
            gp = gp + cfg.ascent_lr * direction
        try:
            cur = model.act(w, gp, cfg.mode)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.debug("teleport action failed: %s", exc)
            cur = w * np.nan
        loss1, g1 = model.loss_grad(cur) if _finite(cur) else (np.nan, g0 * np.nan)
    norm1 = float(g1 @ g1)
    reverted = not (_finite(cur, loss1, norm1) and norm1 > norm0)
    if not reverted and cfg.max_loss_drift is not None:
        reverted = abs(loss1 - loss0) > cfg.max_loss_drift * abs(loss0)
    if reverted:
        log.debug("teleport reverted: |grad|^2 %.6g -> %.6g", norm0, norm1)
        cur, loss1, norm1, g1 = w, loss0, norm0, g0
    report = TeleportReport(
        loss_before=float(loss0), loss_after=float(loss1),
        grad_norm_sq_before=norm0, grad_norm_sq_after=norm1,
        reverted=reverted, wall_time_s=time.perf_counter() - start, trace=trace,
        grad_after=g1,
    )
    return cur, report


def teleport_sgd_epoch(model, w, cfg, batches, opt, rng=None):
    """One SGD epoch with teleportation on the first ``cfg.batches`` mini-batches.

    For each of those batches: teleport using that batch's loss, then take
    one optimizer step on the same batch. The remaining batches get plain
    steps. ``batches`` is a sequence of ``(X, Y)`` pairs; ``model.with_data``
    binds a batch. Returns ``(w, reports)``.
    """
    reports = []
    for i, (xb, yb) in enumerate(batches):
        bound = model.with_data(xb, yb)
        if i < cfg.batches:
            w, rep = teleport(bound, w, cfg, rng)
            reports.append(rep)
        _, g = bound.loss_grad(w)
        w = opt.step(w, g)
    return w, reports


def identity(x):
    return x


class DataTransformLedger:
    """Composition of the data-side group actions applied so far.

    ``ledger.f(x)`` applies the recorded actions in the order they happened,
    i.e. ``f = g_k o ... o g_1``; an empty ledger is the identity.
    """

    def __init__(self, entries=()):
        self.entries = tuple(entries)

    def __len__(self):
        return len(self.entries)

    def then(self, g_x):
        return DataTransformLedger(self.entries + (g_x,))

    def f(self, x):
        for g in self.entries:
            x = g(x)
        return x

    __call__ = f


def teleport_with_data(model, w, X, cfg, ledger, rng=None):
    """Teleport parameters and data together, recording the data action.

    Models may expose ``data_action(w, w_new)`` returning the map applied to
    inputs; the models in this package leave data untouched, so the recorded
    action is the identity. Returns ``(w_new, X_new, ledger_new, report)``.
    """
    w_new, report = teleport(model, w, cfg, rng)
    g_x = identity
    if hasattr(model, "data_action"):
        g_x = model.data_action(w, w_new)
    return w_new, g_x(X), ledger.then(g_x), report
