"""Invariant suite behind ``symtele theory-check``.

Every check returns a :class:`CheckResult` with the measured worst case
and the tolerance it was held to. ``run_checks(fault=True)`` perturbs the
output of every group action slightly, which the invariance and orbit
checks are expected to catch.
"""
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .fd import central_diff, rel_error
from .linalg import pseudoinverse
from .mlp import (Mode, MlpModel, forward, gl_act_all, loss_grad, random_params,
                  teleport_objective_grad, teleport_objective_grad_fd)
from .optim import OptimizerState, train
from .quadratic import QuadForm, QuadraticModel, random_spd
from .teleport import TeleportConfig, teleport
from .testfns import Booth, Ellipse, Rosenbrock, RotationModel
from .theory import euler_decay_check, eta_norm_sq, lipschitz_bound, newton_alignment, speedup_condition

FAULT_SCALE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"{status}  {self.name:<34s} measured={self.measured:.3e}  tol={self.tolerance:.1e}"
        return text + (f"  ({self.detail})" if self.detail else "")


def _at_most(name, measured, tol, detail=""):
    return CheckResult(name, bool(measured <= tol), float(measured), tol, detail)


class _Perturb:
    """Identity, or a small deterministic distortion of group-action outputs."""

    def __init__(self, active):
        self.active = active

    def __call__(self, x):
        if not self.active:
            return x
        return np.asarray(x) * (1.0 + FAULT_SCALE)

    def weights(self, params):
        if not self.active:
            return params
        return params.replace([self(w) for w in params.weights])


def _random_orthogonal(rng, n):
    return scipy.stats.ortho_group.rvs(n, random_state=rng)


def _reference_mlp(rng):
    params = random_params(rng, [5, 6, 7, 8])
    return params, rng.uniform(size=(5, 4)), rng.uniform(size=(8, 4))


def check_testfn_invariance(rng, perturb):
    fns = [Rosenbrock(), Booth(), Ellipse(0.5), Ellipse(4.0)]
    worst = 0.0
    for _ in range(1000):
        fn = fns[rng.integers(len(fns))]
        p = rng.uniform(-3, 3, size=2)
        moved = perturb(fn.rotate(rng.uniform(0, 2 * math.pi), p))
        worst = max(worst, abs(fn(moved) - fn(p)) / max(fn(p), 1e-300))
    return _at_most("testfn rotation invariance", worst, 1e-9, "1000 random (fn, theta, p)")


def check_quadratic_invariance(rng, perturb):
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 8))
        q = QuadForm(random_spd(n, rng, cond=20.0))
        w = rng.normal(size=n)
        moved = perturb(q.act(_random_orthogonal(rng, n), w))
        worst = max(worst, abs(q.eval(moved) - q.eval(w)) / q.eval(w))
    return _at_most("quadratic O(n) invariance", worst, 1e-9)


def check_mlp_invariance(rng, perturb):
    worst = 0.0
    for _ in range(20):
        params, X, Y = _reference_mlp(rng)
        acts = forward(params, X)
        ts = {}
        for m in (2, 3):
            t = rng.normal(size=(params.dims[m - 1],) * 2)
            ts[m] = 0.1 * t / np.linalg.norm(t)
        moved = perturb.weights(gl_act_all(params, ts, acts, Mode.EXACT))
        out0, out1 = acts.output, forward(moved, X).output
        worst = max(worst, rel_error(out1, out0))
        l0, _ = loss_grad(params, X, Y)
        l1, _ = loss_grad(moved, X, Y)
        worst = max(worst, abs(l1 - l0) / l0)
    return _at_most("MLP GL invariance (exact)", worst, 1e-6, "5-6-7-8 net, |T|=0.1")


def check_mlp_group_axioms(rng, perturb):
    params, X, _ = _reference_mlp(rng)
    acts = forward(params, X)
    d = params.dims[2]
    t1, t2 = 0.05 * rng.normal(size=(d, d)), 0.05 * rng.normal(size=(d, d))
    ident = perturb.weights(gl_act_all(params, {3: np.zeros((d, d))}, acts))
    err = max(np.max(np.abs(a - b)) for a, b in zip(ident.weights, params.weights))
    inner = perturb.weights(gl_act_all(params, {3: t2}, acts))
    twice = perturb.weights(gl_act_all(inner, {3: t1}, forward(inner, X)))
    g = (np.eye(d) + t1) @ (np.eye(d) + t2) - np.eye(d)
    once = perturb.weights(gl_act_all(params, {3: g}, acts))
    err = max(err, max(np.max(np.abs(a - b)) for a, b in zip(twice.weights, once.weights)))
    return _at_most("MLP GL identity/composition", err, 1e-8)


def check_linear_network(rng, perturb):
    params = random_params(rng, [5, 6, 7, 8], slope=1.0)
    X = rng.uniform(size=(5, 4))
    d = params.dims[1]
    t = 0.1 * rng.normal(size=(d, d))
    moved = perturb.weights(gl_act_all(params, {2: t}, forward(params, X)))
    g = np.eye(d) + t
    want = (params.weights[1] @ np.linalg.inv(g), g @ params.weights[0])
    err = max(np.max(np.abs(moved.weights[1] - want[0])), np.max(np.abs(moved.weights[0] - want[1])))
    return _at_most("linear network GL form", err, 1e-10)


def check_fd_gradients(rng, perturb):
    worst = 0.0
    for fn in (Rosenbrock(), Booth(), Ellipse(3.0)):
        for _ in range(20):
            p = rng.uniform(-2, 2, size=2)
            worst = max(worst, rel_error(fn.grad(p), central_diff(fn.eval, p, 1e-6)))
    for loss in ("mse", "mean_mse", "xent"):
        params, X, Y = _reference_mlp(rng)
        if loss == "xent":
            Y = np.eye(8)[:, rng.integers(0, 8, size=4)]
        model = MlpModel(params, X, Y, loss)
        w = params.to_vec()
        worst = max(worst, rel_error(model.grad(w), central_diff(model.loss, w, 1e-6)))
        _, analytic = teleport_objective_grad(params, X, Y, (2, 3), loss)
        numeric = teleport_objective_grad_fd(params, X, Y, (2, 3), loss)
        for m in analytic:
            worst = max(worst, rel_error(analytic[m], numeric[m]))
    q = QuadForm(random_spd(4, rng))
    w = rng.normal(size=4)
    worst = max(worst, rel_error(q.grad(w), central_diff(q.eval, w, 1e-6)))
    return _at_most("analytic vs finite-difference grads", worst, 1e-5,
                    "test functions, MLP losses, teleport objective, quadratic")


def check_penrose(rng, perturb):
    worst = 0.0
    for _ in range(100):
        r, c = (int(v) for v in rng.integers(1, 17, size=2))
        m = rng.normal(size=(r, c))
        if rng.random() < 0.3 and min(r, c) > 1:
            k = int(rng.integers(1, min(r, c)))
            m = rng.normal(size=(r, k)) @ rng.normal(size=(k, c))
        p = pseudoinverse(m)
        scale = max(1.0, np.max(np.abs(m)), np.max(np.abs(p)))
        errs = [m @ p @ m - m, p @ m @ p - p, (m @ p) - (m @ p).T, (p @ m) - (p @ m).T]
        worst = max(worst, max(np.max(np.abs(e)) for e in errs) / scale)
    return _at_most("Penrose identities", worst, 1e-8, "random up to 16x16, incl. rank deficient")


def _angle(v, u):
    u = u / np.linalg.norm(u)
    along = abs(float(v @ u))
    across = np.linalg.norm(v - (v @ u) * u)
    return math.atan2(across, along)


def _quad_cases(rng, count, max_cond=50.0):
    for _ in range(count):
        n = int(rng.integers(2, 7))
        q = QuadForm(random_spd(n, rng, cond=float(rng.uniform(2, max_cond))))
        yield q, rng.normal(size=n)


def check_optimal_teleport(rng, perturb):
    angle, gap = 0.0, 0.0
    for q, w in _quad_cases(rng, 50):
        wp = q.optimal_teleport(w)
        angle = max(angle, _angle(wp, q.top_eigenvector()))
        g = q.grad(wp)
        gap = max(gap, abs(g @ g - 4 * q.lambda_max * q.eval(w)) / (4 * q.lambda_max * q.eval(w)))
    return [_at_most("optimal teleport top-eigvec angle", angle, 1e-6),
            _at_most("optimal teleport |grad|^2 = 4 lmax c", gap, 1e-8)]


def check_orbit_transitivity(rng, perturb):
    worst = 0.0
    for q, w1 in _quad_cases(rng, 50):
        w2 = q.act(_random_orthogonal(rng, q.n), w1)
        g = q.orbit_element(w1, w2)
        worst = max(worst, np.linalg.norm(perturb(q.act(g, w1)) - w2))
    return _at_most("quadratic level set is one orbit", worst, 1e-8)


def check_flow_angle(rng, perturb):
    # The top eigendirection decays fastest, so rounding error in the others
    # grows like exp(2 (lmax - lmin) t); spectra are kept inside [1, 5].
    worst = 0.0
    for q, w in _quad_cases(rng, 10, max_cond=5.0):
        u = q.top_eigenvector()
        cur = q.optimal_teleport(w)
        for _ in range(1000):
            cur = cur - 1e-3 * q.grad(cur)
            worst = max(worst, _angle(cur, u))
    return _at_most("flow stays on top eigenvector", worst, 1e-6, "Euler, step 1e-3, 1000 steps")


def check_distance_minimal(rng, perturb):
    worst = -np.inf
    for q, w in _quad_cases(rng, 5):
        best = q.optimal_teleport(w) @ q.optimal_teleport(w)
        for _ in range(200):
            v = q.act(_random_orthogonal(rng, q.n), w)
            worst = max(worst, best - v @ v)
    return _at_most("teleport minimizes distance to w*", worst, 1e-8,
                    "1000 level-set samples; measured = max(|w'|^2 - |v|^2)")


def check_newton(rng, perturb):
    worst = 0.0
    for q, w in _quad_cases(rng, 50):
        wp = q.optimal_teleport(w)
        worst = max(worst, 1.0 - newton_alignment(q.grad(wp), q.hessian()))
    return _at_most("Newton alignment at teleport", worst, 1e-9, "measured = 1 - cosine")


def check_orthogonal_invariance(rng, perturb):
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 8))
        q = QuadForm(np.eye(n))
        w = rng.normal(size=n)
        g = _random_orthogonal(rng, n)
        worst = max(worst, abs(np.linalg.norm(q.grad(perturb(q.act(g, w)))) - np.linalg.norm(q.grad(w))))
        v = speedup_condition(g, rng.normal(size=n), eta=float(rng.uniform(0.01, 1)))
        worst = max(worst, abs(v.lhs - v.rhs))
    return _at_most("orthogonal J keeps |grad|_eta", worst, 1e-12)


def check_linear_action_norms(rng, perturb):
    worst = 0.0
    for q, w in _quad_cases(rng, 50):
        J = q.inv_sqrt_a @ _random_orthogonal(rng, q.n) @ q.sqrt_a
        direct = q.grad(perturb(J @ w))
        for eta in (0.1, rng.uniform(0.01, 1.0, size=q.n)):
            lhs = eta_norm_sq(direct, eta)
            verdict = speedup_condition(J, q.grad(w), eta)
            worst = max(worst, abs(lhs - verdict.lhs) / verdict.lhs)
    return _at_most("linear-action gradient norm identity", worst, 1e-8, "scalar and diagonal eta")


def check_lipschitz(rng, perturb):
    fired, violations = 0, 0
    for q, w in _quad_cases(rng, 200):
        L = 2.0 * q.lambda_max
        eta = float(rng.uniform(0.01, 0.3)) / L
        wp = q.act(_random_orthogonal(rng, q.n), w)
        ratio = np.linalg.norm(q.grad(wp)) / np.linalg.norm(q.grad(w))
        a, b = w.copy(), wp.copy()
        for T in range(1, 6):
            a, b = a - eta * q.grad(a), b - eta * q.grad(b)
            if lipschitz_bound(ratio, eta, L, T):
                fired += 1
                if np.linalg.norm(q.grad(b)) < np.linalg.norm(q.grad(a)) * (1 - 1e-12):
                    violations += 1
    res = CheckResult("Lipschitz sufficient condition", violations == 0 and fired > 0,
                      float(violations), 0.0, f"{fired} cases met the condition")
    return res


def check_euler_decay(rng, perturb):
    worst = 0.0
    params, X, Y = _reference_mlp(rng)
    models = [(RotationModel(Rosenbrock()), np.array([-1.0, -1.0])),
              (RotationModel(Booth()), np.array([5.0, -5.0])),
              (QuadraticModel(QuadForm(random_spd(4, rng))), rng.normal(size=4)),
              (MlpModel(params, X, Y, "mean_mse"), params.to_vec())]
    for model, w in models:
        for eta in (1.0, rng.uniform(0.5, 2.0, size=w.size)):
            measured, predicted = euler_decay_check(model, w, eta)
            worst = max(worst, abs(measured - predicted) / abs(predicted))
    return _at_most("Euler step dL = -delta |grad|_eta^2", worst, 1e-3, "delta = 1e-7")


def check_safeguard(rng, perturb):
    reports = []
    rosen = RotationModel(Rosenbrock())
    cfg = TeleportConfig(frozenset(range(100, 1000, 100)), 10, 0.1)
    reports += train(rosen, [-1.0, -1.0], OptimizerState("gd", 1e-3), cfg, 1000, rng).reports
    booth = RotationModel(Booth(), theta_init=(0.0, math.pi))
    for _ in range(20):
        cfg = TeleportConfig({5}, 10, 1e-3)
        reports += train(booth, [5.0, -5.0], OptimizerState("gd", 0.08), cfg, 10, rng).reports
    for loss, lr in (("mean_mse", 1e-5), ("mse", 1e-7), ("mse", 1.0)):
        params, X, Y = _reference_mlp(rng)
        model = MlpModel(params, X, Y, loss)
        for mode in Mode:
            reports.append(teleport(model, params.to_vec(), TeleportConfig(ascent_steps=8, ascent_lr=lr,
                                                                          mode=mode), rng)[1])
    worst = max(r.grad_norm_sq_before - r.grad_norm_sq_after for r in reports)
    reverted = sum(r.reverted for r in reports)
    return _at_most("teleport never lowers |grad|^2", max(worst, 0.0), 0.0,
                    f"{len(reports)} teleports, {reverted} reverted")


def check_first_order_scaling(rng, perturb):
    params, X, Y = _reference_mlp(rng)
    acts = forward(params, X)
    l0, _ = loss_grad(params, X, Y)
    ts = {m: rng.normal(size=(params.dims[m - 1],) * 2) for m in (2, 3)}
    ratios = []
    for s in (0.02, 0.01, 0.005):
        errs = []
        for scale in (s, s / 2):
            moved = gl_act_all(params, {m: scale * t for m, t in ts.items()}, acts, Mode.FIRST_ORDER)
            errs.append(abs(loss_grad(moved, X, Y)[0] - l0))
        ratios.append(errs[0] / errs[1])
    passed = all(3.0 <= r <= 5.0 for r in ratios)
    spread = max(abs(r - 4.0) for r in ratios)
    return CheckResult("first-order action error ~ |T|^2", passed, spread, 1.0,
                       "halving ratios " + ", ".join(f"{r:.3f}" for r in ratios))


CHECKS = (
    check_testfn_invariance, check_quadratic_invariance, check_mlp_invariance,
    check_mlp_group_axioms, check_linear_network, check_fd_gradients, check_penrose,
    check_optimal_teleport, check_orbit_transitivity, check_flow_angle,
    check_distance_minimal, check_newton, check_orthogonal_invariance,
    check_linear_action_norms, check_lipschitz, check_euler_decay, check_safeguard,
    check_first_order_scaling,
)


def run_checks(fault=False, seed=0):
    """Run every check; returns a list of :class:`CheckResult`."""
    perturb = _Perturb(fault)
    results = []
    for check in CHECKS:
        rng = np.random.default_rng(seed)
        out = check(rng, perturb)
        results.extend(out if isinstance(out, list) else [out])
    return results


def format_report(results, elapsed=None):
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    summary = f"{len(results) - failed}/{len(results)} checks passed"
    if elapsed is not None:
        summary += f" in {elapsed:.1f}s"
    return "\n".join(lines + [summary])


def main_report(fault=False, seed=0):
    start = time.perf_counter()
    results = run_checks(fault, seed)
    return results, format_report(results, time.perf_counter() - start)
