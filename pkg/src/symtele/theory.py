"""Checks of when a teleport speeds up descent and for how long.

Learning rates enter as a scalar or as the diagonal of a preconditioner,
and ``||v||_eta^2 = v^T eta v``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolated
from .linalg import as_matrix, is_symmetric

_SINGULAR_COND = 1e12


@dataclass(frozen=True)
class SpeedupVerdict:
    lhs: float
    rhs: float

    @property
    def accelerates(self):
        return self.lhs > self.rhs


def eta_norm_sq(v, eta):
    """``v^T eta v`` for scalar or diagonal ``eta``."""
    v = np.asarray(v, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    if eta.ndim == 0:
        return float(eta) * float(v @ v)
    if eta.shape != v.shape:
        raise ValueError(f"diagonal eta of shape {eta.shape} does not match vector {v.shape}")
    return float(v @ (eta * v))


def _solve_checked(m, rhs, what):
    if np.linalg.cond(m) > _SINGULAR_COND:
        raise ValueError(f"{what} is singular")
    return np.linalg.solve(m, rhs)


def speedup_condition(J, grad, eta=1.0):
    """Compare ``||J^-T grad||_eta^2`` (after a linear teleport ``J``) with ``||grad||_eta^2``."""
    J = as_matrix(J, "J")
    grad = np.asarray(grad, dtype=np.float64)
    if J.shape != (grad.size, grad.size):
        raise ValueError(f"J must be {grad.size}x{grad.size}")
    moved = _solve_checked(J.T, grad, "J")
    return SpeedupVerdict(eta_norm_sq(moved, eta), eta_norm_sq(grad, eta))


def lipschitz_threshold(eta, L, T):
    """Gradient-norm ratio a teleport needs to stay ahead for ``T`` GD steps."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    if not (eta > 0 and L > 0):
        raise ValueError("eta and L must be positive")
    q = eta * L
    if q >= 1:
        raise HypothesisViolated(f"needs eta * L < 1, got {q}")
    return ((1.0 + q) / (1.0 - q)) ** T


def lipschitz_bound(grad_ratio, eta, L, T):
    """True when ``grad_ratio`` meets the sufficient condition for ``T`` steps.

    ``grad_ratio`` is ``||grad L(w')|| / ||grad L(w)||`` right after the
    teleport; ``L`` is the Lipschitz constant of ``grad L``.
    """
    return bool(grad_ratio >= lipschitz_threshold(eta, L, T))


def newton_alignment(grad, hessian):
    """Cosine between ``grad`` and the Newton direction ``H^-1 grad``."""
    grad = np.asarray(grad, dtype=np.float64)
    H = as_matrix(hessian, "hessian")
    if not is_symmetric(H, 1e-10 * max(1.0, np.max(np.abs(H)))):
        raise ValueError("hessian must be symmetric")
    newton = _solve_checked(H, grad, "hessian")
    denom = np.linalg.norm(grad) * np.linalg.norm(newton)
    if denom == 0:
        raise ValueError("gradient is zero")
    return float(np.clip(grad @ newton / denom, -1.0, 1.0))


def euler_decay_check(model, w, eta=1.0, delta=1e-7):
    """One gradient-flow Euler step: ``(measured dL, predicted -delta ||grad||_eta^2)``."""
    w = np.asarray(w, dtype=np.float64)
    loss0, g = model.loss_grad(w)
    eta_arr = np.asarray(eta, dtype=np.float64)
    step = eta_arr * g
    loss1 = model.loss(w - delta * step)
    return loss1 - loss0, -delta * eta_norm_sq(g, eta)
