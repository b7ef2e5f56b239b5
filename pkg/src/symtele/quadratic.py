"""Convex quadratic forms ``L_A(w) = w^T A w`` and their O(n) symmetry.

The action ``g . w = A^{-1/2} g A^{1/2} w`` is transitive on every level set,
so the best teleport destination has a closed form: the point of the level
set lying on the top eigenvector of ``A``.
"""
import numpy as np
import scipy.linalg

from .linalg import as_matrix, is_symmetric, jacobi_eigh, top_eigenpair

ORTHOGONAL_TOL = 1e-10
# Eigenvalues this close (relative) to the largest count as the same eigenvalue.
_DEGENERATE_RTOL = 1e-10


def _vector(w, n):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {w.shape}")
    return w


def _sign_fix(u, ref):
    """Orient ``u`` to have nonnegative inner product with ``ref``."""
    dot = float(u @ ref)
    if dot < 0:
        return -u
    if dot == 0:
        nz = np.flatnonzero(u)
        if nz.size and u[nz[0]] < 0:
            return -u
    return u


class QuadForm:
    """A symmetric positive-definite quadratic form.

    The eigen-decomposition (cyclic Jacobi) and the square roots of ``A`` are
    computed once at construction.
    """

    def __init__(self, a):
        a = as_matrix(a, "A")
        if not is_symmetric(a):
            raise ValueError("A must be symmetric")
        values, vectors = jacobi_eigh(a)
        if values[0] <= 0:
            raise ValueError(f"A must be positive definite (smallest eigenvalue {values[0]:.3e})")
        self.a = a
        self.n = a.shape[0]
        self.eigenvalues = values
        self.eigenvectors = vectors
        root = np.sqrt(values)
        self.sqrt_a = (vectors * root) @ vectors.T
        self.inv_sqrt_a = (vectors / root) @ vectors.T
        self.lambda_max = float(values[-1])

    def __repr__(self):
        return f"QuadForm(n={self.n})"

    def eval(self, w):
        w = _vector(w, self.n)
        return float(w @ self.a @ w)

    def grad(self, w):
        return 2.0 * self.a @ _vector(w, self.n)

    def eval_grad(self, w):
        w = _vector(w, self.n)
        aw = self.a @ w
        return float(w @ aw), 2.0 * aw

    def hessian(self):
        return 2.0 * self.a

    def act(self, g, w):
        g = as_matrix(g, "g")
        if g.shape != (self.n, self.n):
            raise ValueError(f"g must be {self.n}x{self.n}")
        if np.max(np.abs(g.T @ g - np.eye(self.n))) > ORTHOGONAL_TOL:
            raise ValueError("g is not orthogonal")
        return self.inv_sqrt_a @ (g @ (self.sqrt_a @ _vector(w, self.n)))

    def top_eigenspace(self):
        lam = self.eigenvalues
        keep = lam >= lam[-1] * (1.0 - _DEGENERATE_RTOL)
        return self.eigenvectors[:, keep]

    def optimal_teleport(self, w):
        """Point of largest gradient norm on the level set through ``w``.

        With a repeated top eigenvalue the projection of ``w`` onto the top
        eigenspace is used, rescaled back to the level set.
        """
        w = _vector(w, self.n)
        c = self.eval(w)
        if c == 0.0:
            raise ValueError("w is the global minimum; there is nowhere to teleport")
        basis = self.top_eigenspace()
        proj = basis @ (basis.T @ w)
        nrm = np.linalg.norm(proj)
        if nrm > 1e-14 * np.linalg.norm(w):
            u = proj / nrm
        else:
            u = basis[:, 0]
        u = _sign_fix(u, w)
        return np.sqrt(c / self.lambda_max) * u

    def top_eigenvector(self):
        """Unit top eigenvector by power iteration (independent of Jacobi)."""
        return top_eigenpair(self.a, tol=1e-12).vector

    def orbit_element(self, w1, w2):
        """Orthogonal ``g`` with ``act(g, w1) == w2``, for w1, w2 on one level set.

        Built from two Householder reflections sending ``e1`` to the
        normalized points ``A^{1/2} w / sqrt(c)``.
        """
        w1 = _vector(w1, self.n)
        w2 = _vector(w2, self.n)
        c1, c2 = self.eval(w1), self.eval(w2)
        if c1 <= 0 or abs(c1 - c2) > 1e-9 * max(c1, c2):
            raise ValueError("w1 and w2 must lie on the same nonzero level set")
        v1 = self.sqrt_a @ w1 / np.sqrt(c1)
        v2 = self.sqrt_a @ w2 / np.sqrt(c2)
        return _householder_e1(v2) @ _householder_e1(v1).T


def _householder_e1(v):
    """Orthogonal matrix whose first column is the unit vector ``v``."""
    n = v.size
    e1 = np.zeros(n)
    e1[0] = 1.0
    u = e1 - v
    uu = u @ u
    if uu < 1e-30:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(u, u) / uu


def random_spd(n, rng, cond=10.0):
    """Random SPD matrix with eigenvalues spread log-uniformly over ``[1, cond]``."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    values = np.geomspace(1.0, cond, n)
    rng.shuffle(values)
    a = (q * values) @ q.T
    return 0.5 * (a + a.T)


def skew(m):
    return 0.5 * (m - m.T)


class QuadraticModel:
    """Teleportable quadratic: group parameters are a skew-symmetric generator.

    ``init_scale > 0`` starts each teleport from a random small rotation,
    which is needed to leave a critical point of the teleport objective.
    """

    def __init__(self, q, init_scale=0.0):
        self.q = q
        self.init_scale = init_scale

    def loss(self, w):
        return self.q.eval(w)

    def grad(self, w):
        return self.q.grad(w)

    def loss_grad(self, w):
        return self.q.eval_grad(w)

    def group_init(self, w, rng=None):
        n = self.q.n
        if self.init_scale == 0:
            return np.zeros(n * n)
        rng = np.random.default_rng() if rng is None else rng
        return (self.init_scale * skew(rng.normal(size=(n, n)))).ravel()

    def act(self, w, gparam, mode=None):
        n = self.q.n
        g = scipy.linalg.expm(skew(np.reshape(gparam, (n, n))))
        return self.q.act(g, w)

    def objective(self, w, gparam):
        g = self.q.grad(self.act(w, gparam))
        return float(g @ g)

    def objective_grad(self, w, gparam=None, mode=None):
        # J(S) = ||2 A w(S)||^2 = 4 u^T A u with u = exp(S) A^1/2 w, so
        # dJ = 8 (A u)^T dexp_S[dS] v; the adjoint of dexp_S is dexp_{S^T}.
        n = self.q.n
        half = self.q.sqrt_a @ w
        if gparam is None or not np.any(gparam):
            three_half = self.q.a @ half
            return 4.0 * float(half @ three_half), skew(8.0 * np.outer(three_half, half)).ravel()
        s = skew(np.reshape(gparam, (n, n)))
        u = scipy.linalg.expm(s) @ half
        au = self.q.a @ u
        grad_s = scipy.linalg.expm_frechet(s.T, 8.0 * np.outer(au, half), compute_expm=False)
        return 4.0 * float(u @ au), skew(grad_s).ravel()
