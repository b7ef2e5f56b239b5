"""Small dense kernels: pseudoinverse, dominant eigenpair, Jacobi eigensolver.

Matrices are plain 2-D float64 numpy arrays. Everything here is a pure
function of its inputs.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError

RANK_RTOL = 1e-10
SYMMETRY_TOL = 1e-10
# Above this estimated condition number the Gram route loses too many digits.
_GRAM_COND_LIMIT = 1e6


@dataclass(frozen=True)
class EigPair:
    value: float
    vector: np.ndarray


def as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def is_symmetric(a, tol=SYMMETRY_TOL):
    return a.shape[0] == a.shape[1] and np.max(np.abs(a - a.T), initial=0.0) <= tol


def _pinv_tall(m, gram=None):
    rows, cols = m.shape
    gram = m.T @ m if gram is None else gram
    colnorm = np.sqrt(np.max(np.diag(gram)))
    if colnorm == 0.0:
        return np.zeros((cols, rows))
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
        diag = np.abs(np.diag(factor[0]))
        if diag.min() > RANK_RTOL * colnorm and (diag.max() / diag.min()) ** 2 < _GRAM_COND_LIMIT:
            return scipy.linalg.cho_solve(factor, m.T, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    return _pinv_cod(m, colnorm)


def _pinv_cod(m, colnorm):
    # Complete orthogonal decomposition built from two QR factorizations:
    # m P = Q1 [R11 R12], [R11 R12]^T = Z T  =>  m+ = P Z T^{-T} Q1^T.
    q, r, perm = scipy.linalg.qr(m, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > RANK_RTOL * colnorm))
    if rank == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    q1 = q[:, :rank]
    z, t = scipy.linalg.qr(r[:rank, :].T, mode="economic", check_finite=False)
    core = scipy.linalg.solve_triangular(t, q1.T, trans="T", check_finite=False)
    out = np.zeros((m.shape[1], m.shape[0]))
    out[perm, :] = z @ core
    return out


def left_inverse(h, rtol=RANK_RTOL):
    """``(ok, h^+)`` for a tall activation matrix from one Gram eigendecomposition.

    ``ok`` is the :func:`left_inverse_ok` rank test; when it holds, ``h^+``
    solves the Gram system with the eigenvectors already at hand, falling
    back to the orthogonal-decomposition route for ill-conditioned input.
    ``h^+`` is ``None`` when the rank check fails.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < h.shape[1]:
        return False, None
    gram = h.T @ h
    if not np.all(np.isfinite(gram)):
        return False, None
    scale = float(np.max(np.diag(gram), initial=0.0))
    if scale == 0.0:
        return False, None
    lam, vecs = np.linalg.eigh(gram)
    if not lam[0] > rtol * scale:
        return False, None
    if lam[-1] / lam[0] < _GRAM_COND_LIMIT:
        return True, (vecs / lam) @ (vecs.T @ h.T)
    return True, _pinv_cod(h, np.sqrt(scale))


def pseudoinverse(m):
    """Moore-Penrose pseudoinverse of a dense matrix.

    Full-column-rank, well-conditioned inputs go through a Cholesky solve of
    the Gram matrix; everything else through a column-pivoted complete
    orthogonal decomposition with rank threshold ``1e-10 * max column norm``.
    """
    m = as_matrix(m)
    if m.shape[0] >= m.shape[1]:
        return _pinv_tall(m)
    return _pinv_tall(m.T).T


def left_inverse_ok(h, rtol=RANK_RTOL, gram=None):
    """True when ``h`` has full column rank by the Gram-eigenvalue proxy."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[0] < h.shape[1]:
        return False
    gram = h.T @ h if gram is None else gram
    scale = np.max(np.diag(gram), initial=0.0)
    if scale == 0.0 or not np.all(np.isfinite(gram)):
        return False
    return float(np.linalg.eigvalsh(gram)[0]) > rtol * scale


def _seed_vector(n):
    # All-ones plus a small irrational ramp, so no eigenvector of a
    # structured matrix is exactly orthogonal to the start.
    v = np.ones(n) + 1e-3 * np.sqrt(np.arange(2, n + 2))
    return v / np.linalg.norm(v)


def top_eigenpair(a, tol=1e-10, max_iter=100_000):
    """Largest eigenvalue and a unit eigenvector of a symmetric matrix.

    Power iteration, shifted by a Gershgorin bound when the matrix may have
    negative eigenvalues so that the largest algebraic eigenvalue dominates.
    Raises :class:`ConvergenceError` if the residual ``||A v - l v||`` does
    not reach ``tol`` within ``max_iter`` iterations.
    """
    a = as_matrix(a)
    if not is_symmetric(a):
        raise ValueError("top_eigenpair needs a symmetric matrix")
    n = a.shape[0]
    radius = np.abs(a).sum(axis=1) - np.abs(np.diag(a))
    lower = float(np.min(np.diag(a) - radius))
    shift = -lower if lower < 0 else 0.0
    b = a + shift * np.eye(n)

    v = _seed_vector(n)
    residual = np.inf
    for _ in range(max_iter):
        av = a @ v
        lam = float(v @ av)
        residual = float(np.linalg.norm(av - lam * v))
        if residual <= tol:
            return EigPair(lam, v)
        w = b @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # b v = 0 only when v lies in the null space of the shifted matrix.
            return EigPair(lam, v)
        v = w / nrm
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})",
        residual=residual,
    )


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi sweeps.

    Returns ``(values, vectors)`` with ascending eigenvalues and orthonormal
    eigenvector columns.
    """
    a = as_matrix(a)
    if not is_symmetric(a):
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    n = a.shape[0]
    m = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(np.linalg.norm(m), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(m, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                theta = (m[q, q] - m[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * m[:, p] - s * m[:, q]
                rot_q = s * m[:, p] + c * m[:, q]
                m[:, p], m[:, q] = rot_p, rot_q
                rot_p = c * m[p, :] - s * m[q, :]
                rot_q = s * m[p, :] + c * m[q, :]
                m[p, :], m[q, :] = rot_p, rot_q
                vp = c * v[:, p] - s * v[:, q]
                vq = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = vp, vq
    else:
        raise ConvergenceError("Jacobi sweeps did not converge")
    values = np.diag(m).copy()
    order = np.argsort(values)
    return values[order], v[:, order]
