"""Two-variable test functions with a hidden SO(2) symmetry.

Each function can be written as ``L(x) = ||h(x)||^2`` for a bijection ``h``,
so rotating ``h(x)`` and mapping back with ``h^-1`` leaves the loss fixed.
"""
import math

import numpy as np

FD_STEP = 1e-6


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _point(p):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (2,):
        raise ValueError(f"expected a point of shape (2,), got {p.shape}")
    return p


class TestFunction:
    """Base class; subclasses supply ``to_uv``, ``from_uv``, ``grad``, ``hessian``."""

    __test__ = False  # not a pytest class
    name = "testfn"

    def __call__(self, p):
        return self.eval(p)

    def eval(self, p):
        u, v = self.to_uv(p)
        return float(u * u + v * v)

    def rotate(self, theta, p):
        """Act on ``p`` by the rotation angle ``theta``: ``h^-1(R(theta) h(p))``."""
        return self.from_uv(rotation(theta) @ self.to_uv(p))

    def __repr__(self):
        return f"{type(self).__name__}()"


class Rosenbrock(TestFunction):
    name = "rosenbrock"
    minimum = (1.0, 1.0)

    def to_uv(self, p):
        x1, x2 = _point(p)
        return np.array([10.0 * (x1 * x1 - x2), x1 - 1.0])

    def from_uv(self, q):
        u, v = _point(q)
        x1 = v + 1.0
        return np.array([x1, x1 * x1 - 0.1 * u])

    def eval(self, p):
        x1, x2 = _point(p)
        return float(100.0 * (x1 * x1 - x2) ** 2 + (x1 - 1.0) ** 2)

    def grad(self, p):
        x1, x2 = _point(p)
        r = x1 * x1 - x2
        return np.array([400.0 * x1 * r + 2.0 * (x1 - 1.0), -200.0 * r])

    def hessian(self, p):
        x1, x2 = _point(p)
        return np.array([
            [1200.0 * x1 * x1 - 400.0 * x2 + 2.0, -400.0 * x1],
            [-400.0 * x1, 200.0],
        ])


class Booth(TestFunction):
    name = "booth"
    minimum = (1.0, 3.0)

    def to_uv(self, p):
        x1, x2 = _point(p)
        return np.array([x1 + 2.0 * x2 - 7.0, 2.0 * x1 + x2 - 5.0])

    def from_uv(self, q):
        u, v = _point(q)
        return np.array([-u / 3.0 + 2.0 * v / 3.0 + 1.0, 2.0 * u / 3.0 - v / 3.0 + 3.0])

    def grad(self, p):
        u, v = self.to_uv(p)
        return np.array([2.0 * u + 4.0 * v, 4.0 * u + 2.0 * v])

    def hessian(self, p):
        return np.array([[10.0, 8.0], [8.0, 10.0]])


class Ellipse(TestFunction):
    """``x1^2 + a x2^2`` with ``a > 0``."""

    name = "ellipse"
    minimum = (0.0, 0.0)

    def __init__(self, a):
        if not a > 0:
            raise ValueError(f"ellipse coefficient must be positive, got {a}")
        self.a = float(a)
        self._sqrt_a = math.sqrt(self.a)

    def to_uv(self, p):
        x1, x2 = _point(p)
        return np.array([x1, self._sqrt_a * x2])

    def from_uv(self, q):
        u, v = _point(q)
        return np.array([u, v / self._sqrt_a])

    def grad(self, p):
        x1, x2 = _point(p)
        return np.array([2.0 * x1, 2.0 * self.a * x2])

    def hessian(self, p):
        return np.diag([2.0, 2.0 * self.a])

    def __repr__(self):
        return f"Ellipse(a={self.a})"


def by_name(name, a=None):
    if name == "rosenbrock":
        return Rosenbrock()
    if name == "booth":
        return Booth()
    if name == "ellipse":
        return Ellipse(1.0 if a is None else a)
    raise ValueError(f"unknown test function {name!r}")


class RotationModel:
    """Teleportable loss model over a test function, group parameter = angle.

    ``theta_init`` is ``None`` for the identity start or a ``(low, high)``
    interval sampled uniformly when a teleport begins.
    """

    def __init__(self, fn, theta_init=None, fd_step=FD_STEP):
        self.fn = fn
        self.theta_init = theta_init
        self.fd_step = fd_step

    def loss(self, w):
        return self.fn.eval(w)

    def grad(self, w):
        return self.fn.grad(w)

    def loss_grad(self, w):
        return self.fn.eval(w), self.fn.grad(w)

    def group_init(self, w, rng=None):
        if self.theta_init is None:
            return np.zeros(1)
        low, high = self.theta_init
        rng = np.random.default_rng() if rng is None else rng
        return np.array([rng.uniform(low, high)])

    def act(self, w, gparam, mode=None):
        return self.fn.rotate(float(gparam[0]), w)

    def objective(self, w, gparam):
        g = self.fn.grad(self.act(w, gparam))
        return float(g @ g)

    def objective_grad(self, w, gparam=None, mode=None):
        """``||grad L(theta . w)||^2`` and its theta-derivative by central difference."""
        h = self.fd_step
        theta = 0.0 if gparam is None else float(gparam[0])
        up = self.objective(w, np.array([theta + h]))
        down = self.objective(w, np.array([theta - h]))
        return self.objective(w, np.array([theta])), np.array([(up - down) / (2.0 * h)])
