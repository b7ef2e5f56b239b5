"""Where the gradient is largest on the level set of a convex quadratic.

For ``L(w) = w^T A w`` every level set is a single orbit of a linear group.
The steepest point sits on the top eigenvector of ``A``; there the gradient
points along the Newton direction, so one GD step with the right step size
lands on the minimum.

    python demos/quadratic_orbits.py
"""
import numpy as np

from symtele.quadratic import QuadForm, QuadraticModel, random_spd
from symtele.teleport import TeleportConfig, teleport
from symtele.theory import newton_alignment

rng = np.random.default_rng(0)
q = QuadForm(random_spd(4, rng, cond=10.0))
w = rng.normal(size=4)
c = q.eval(w)
print(f"eigenvalues of A: {np.round(q.eigenvalues, 3)}")
print(f"start: L = {c:.4f}, |grad|^2 = {q.grad(w) @ q.grad(w):.4f}, "
      f"Newton cosine {newton_alignment(q.grad(w), q.hessian()):.4f}")

best = q.optimal_teleport(w)
g = q.grad(best)
print(f"closed form: L = {q.eval(best):.4f}, |grad|^2 = {g @ g:.4f} "
      f"(4 lambda_max c = {4 * q.lambda_max * c:.4f}), "
      f"Newton cosine {newton_alignment(g, q.hessian()):.10f}")

model = QuadraticModel(q)
print("gradient ascent on the group coordinates:")
for steps in (1, 10, 100):
    w_new, rep = teleport(model, w, TeleportConfig(ascent_steps=steps, ascent_lr=1e-3))
    u = w_new / np.linalg.norm(w_new)
    angle = np.degrees(np.arccos(min(1.0, abs(u @ q.top_eigenvector()))))
    print(f"  {steps:4d} steps: |grad|^2 = {rep.grad_norm_sq_after:.4f}, "
          f"angle to top eigenvector {angle:6.2f} deg, L drift {rep.loss_after - c:+.1e}")

step = best - g / (2 * q.lambda_max)
print(f"one GD step of size 1/(2 lambda_max) from the teleported point: L = {q.eval(step):.2e}")
