"""LeakyReLU multilayer perceptron with hand-written backprop and GL symmetry.

Shapes follow the column-sample convention: ``X`` is ``d_0 x n`` and layer
``m`` maps ``h_{m-1}`` (``d_{m-1} x n``) to ``h_m = sigma(W_m h_{m-1})``.
The top layer is linear. With ``bias=True`` every ``W_m`` carries an extra
last column that multiplies a row of ones appended to ``h_{m-1}``.

The GL action on the pair ``(W_m, W_{m-1})`` is applied as

    W_m     <- W_m g^-1
    W_{m-1} <- W_{m-1} + (sigma^-1(g sigma(Z_{m-1})) - Z_{m-1}) h_{m-2}^+

with ``Z_{m-1} = W_{m-1} h_{m-2}``. Whenever ``h_{m-2}`` has full column
rank this sends ``Z_{m-1}`` to ``sigma^-1(g sigma(Z_{m-1}))``, so every layer
output above ``m-1`` is unchanged, and it is a genuine group action
(identity and composition) even when ``h_{m-2}`` is not square.
"""
import enum
import math
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateActivationError
from .linalg import left_inverse

log = logging.getLogger(__name__)

DEFAULT_SLOPE = 0.1
# I + T is treated as singular beyond this condition number.
_COND_LIMIT = 1e12


class Mode(enum.Enum):
    EXACT = "exact"
    FIRST_ORDER = "first_order"


def leaky(x, slope):
    if slope <= 1:
        return np.maximum(x, slope * x)
    return np.where(x >= 0, x, slope * x)


def leaky_inverse(y, slope):
    if not slope > 0:
        raise ValueError("LeakyReLU slope must be positive to be invertible")
    return np.where(y >= 0, y, y / slope)


def leaky_deriv(x, slope):
    return np.where(x >= 0, 1.0, slope)


@dataclass(frozen=True)
class MlpParams:
    weights: tuple
    slope: float = DEFAULT_SLOPE
    bias: bool = False

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        object.__setattr__(self, "weights", ws)
        if not ws:
            raise ValueError("an MLP needs at least one layer")
        if not 0 < self.slope <= 1:
            raise ValueError(f"slope must lie in (0, 1], got {self.slope}")
        extra = 1 if self.bias else 0
        for lower, upper in zip(ws, ws[1:]):
            if upper.shape[1] != lower.shape[0] + extra:
                raise ValueError(f"incompatible layer shapes {lower.shape} -> {upper.shape}")

    @property
    def depth(self):
        return len(self.weights)

    @property
    def shapes(self):
        return tuple(w.shape for w in self.weights)

    @property
    def dims(self):
        """Layer widths ``(d_0, ..., d_p)``."""
        extra = 1 if self.bias else 0
        return (self.weights[0].shape[1] - extra,) + tuple(w.shape[0] for w in self.weights)

    def to_vec(self):
        return np.concatenate([w.ravel() for w in self.weights])

    def from_vec(self, vec):
        return MlpParams(unflatten(vec, self.shapes), self.slope, self.bias)

    def replace(self, weights):
        return MlpParams(tuple(weights), self.slope, self.bias)


def unflatten(vec, shapes):
    out, start = [], 0
    for shape in shapes:
        size = shape[0] * shape[1]
        out.append(vec[start:start + size].reshape(shape))
        start += size
    if start != vec.size:
        raise ValueError(f"vector of length {vec.size} does not match shapes {shapes}")
    return out


def _aug(h, bias):
    if not bias:
        return h
    return np.vstack([h, np.ones((1, h.shape[1]))])


def _aug0(h, bias):
    if not bias:
        return h
    return np.vstack([h, np.zeros((1, h.shape[1]))])


def _core(w, bias):
    """Weight columns that multiply real units (drops the bias column)."""
    return w[:, :-1] if bias else w


@dataclass(frozen=True)
class Activations:
    """Layer outputs ``h[0..p]`` (``h[0] = X``) and pre-activations ``z[1..p]``.

    ``z[0]`` is ``None`` so that indices line up with layer numbers. ``d``
    optionally caches the activation derivatives at ``z``.
    """

    h: tuple
    z: tuple
    d: tuple = None

    @property
    def output(self):
        return self.h[-1]


def forward(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != params.dims[0]:
        raise ValueError(f"X must have {params.dims[0]} rows, got shape {X.shape}")
    hs, zs, ds = [X], [None], [None]
    p = params.depth
    for k, w in enumerate(params.weights, start=1):
        z = w @ _aug(hs[-1], params.bias)
        zs.append(z)
        if k == p:
            hs.append(z)
            ds.append(None)
        else:
            hs.append(leaky(z, params.slope))
            ds.append(leaky_deriv(z, params.slope))
    return Activations(tuple(hs), tuple(zs), tuple(ds))


def _deriv(acts, k, slope):
    if acts.d is not None and acts.d[k] is not None:
        return acts.d[k]
    return leaky_deriv(acts.z[k], slope)


def _check_targets(params, acts, Y):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != acts.output.shape:
        raise ValueError(f"Y must have shape {acts.output.shape}, got {Y.shape}")
    return Y


def _log_softmax(z):
    shifted = z - z.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def output_loss(out, Y, loss="mse"):
    """Loss of network output ``out`` against ``Y``.

    ``mse``: squared Frobenius norm ``||Y - out||^2``.
    ``mean_mse``: the same divided by the number of entries.
    ``norm``: Frobenius norm ``||Y - out||`` (not squared).
    ``xent``: softmax cross-entropy averaged over the sample columns.
    """
    if loss in ("mse", "mean_mse", "norm"):
        r = out - Y
        sq = float(np.sum(r * r))
        if loss == "mse":
            return sq
        return sq / r.size if loss == "mean_mse" else math.sqrt(sq)
    if loss == "xent":
        return float(-np.sum(Y * _log_softmax(out)) / out.shape[1])
    raise ValueError(f"unknown loss {loss!r}")


def _output_delta(out, Y, loss):
    if loss == "mse":
        return 2.0 * (out - Y)
    if loss == "mean_mse":
        return 2.0 * (out - Y) / out.size
    if loss == "norm":
        r = out - Y
        return r / np.linalg.norm(r)
    if loss == "xent":
        return (np.exp(_log_softmax(out)) - Y) / out.shape[1]
    raise ValueError(f"unknown loss {loss!r}")


def _backprop(params, acts, delta_top):
    """Per-layer gradients and pre-activation deltas given dL/dZ_p."""
    p = params.depth
    grads = [None] * p
    deltas = [None] * (p + 1)
    deltas[p] = delta_top
    for k in range(p, 0, -1):
        grads[k - 1] = deltas[k] @ _aug(acts.h[k - 1], params.bias).T
        if k > 1:
            back = _core(params.weights[k - 1], params.bias).T @ deltas[k]
            deltas[k - 1] = back * _deriv(acts, k - 1, params.slope)
    return grads, deltas


def loss_grad(params, X, Y, loss="mse", acts=None):
    """Loss and the list of per-layer gradients ``dL/dW_m``."""
    acts = forward(params, X) if acts is None else acts
    Y = _check_targets(params, acts, Y)
    value = output_loss(acts.output, Y, loss)
    grads, _ = _backprop(params, acts, _output_delta(acts.output, Y, loss))
    return value, grads


def hvp(params, X, Y, direction, loss="mse", acts=None, deltas=None):
    """Hessian-vector product ``H v`` by forward-mode differentiation of backprop.

    ``direction`` is a list of matrices shaped like the weights. LeakyReLU has
    zero second derivative away from the kink, so only the linear terms of the
    chain rule survive. ``deltas`` may carry the backprop deltas already
    computed at this point.
    """
    acts = forward(params, X) if acts is None else acts
    Y = _check_targets(params, acts, Y)
    p, bias, slope = params.depth, params.bias, params.slope
    ws = params.weights

    # forward R-pass
    r_h = [np.zeros_like(acts.h[0])]
    r_z = [None]
    for k in range(1, p + 1):
        rz = direction[k - 1] @ _aug(acts.h[k - 1], bias) + _core(ws[k - 1], bias) @ r_h[k - 1]
        r_z.append(rz)
        r_h.append(rz if k == p else _deriv(acts, k, slope) * rz)

    out = acts.output
    delta_top = _output_delta(out, Y, loss)
    if loss == "mse":
        r_delta_top = 2.0 * r_z[p]
    elif loss == "mean_mse":
        r_delta_top = 2.0 * r_z[p] / out.size
    elif loss == "norm":
        r = out - Y
        nrm = np.linalg.norm(r)
        r_delta_top = r_z[p] / nrm - r * np.sum(r * r_z[p]) / nrm ** 3
    elif loss == "xent":
        s = np.exp(_log_softmax(out))
        n = out.shape[1]
        r_delta_top = s * (r_z[p] - np.sum(s * r_z[p], axis=0, keepdims=True)) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")

    if deltas is None:
        _, deltas = _backprop(params, acts, delta_top)
    out_grads = [None] * p
    r_delta = r_delta_top
    for k in range(p, 0, -1):
        out_grads[k - 1] = (r_delta @ _aug(acts.h[k - 1], bias).T
                            + deltas[k] @ _aug0(r_h[k - 1], bias).T)
        if k > 1:
            r_back = (_core(direction[k - 1], bias).T @ deltas[k]
                      + _core(ws[k - 1], bias).T @ r_delta)
            r_delta = r_back * _deriv(acts, k - 1, slope)
    return out_grads


@dataclass(frozen=True)
class GlAction:
    """Group element ``g = I + T`` acting on the pair ``(W_m, W_{m-1})``."""

    layer: int
    T: np.ndarray
    mode: Mode = Mode.EXACT


def _plus_identity(T, sign=1.0):
    out = sign * T
    out.flat[::T.shape[0] + 1] += 1.0
    return out


def _group_inverse(T, mode):
    if mode is Mode.FIRST_ORDER:
        return _plus_identity(T, -1.0)
    g = _plus_identity(T)
    if np.linalg.cond(g) > _COND_LIMIT:
        raise ValueError("I + T is singular")
    return np.linalg.inv(g)


class _PairCache:
    """Per-pair quantities that do not depend on T: h_{m-2}^+ and sigma(Z_{m-1})."""

    def __init__(self, params, acts):
        self.params = params
        self.acts = acts
        self._pinv = {}
        self._ok = {}

    def _load(self, m):
        if m not in self._ok:
            ok, pinv = left_inverse(_aug(self.acts.h[m - 2], self.params.bias))
            self._ok[m], self._pinv[m] = ok, pinv
        return self._ok[m]

    def ok(self, m):
        return self._load(m)

    def pinv(self, m):
        if not self._load(m):
            shape = _aug(self.acts.h[m - 2], self.params.bias).shape
            raise DegenerateActivationError(
                f"h_{m - 2} (shape {shape}) lacks full column rank; "
                f"cannot act on layer pair {m}")
        return self._pinv[m]


def teleportable_layers(params):
    return tuple(range(2, params.depth + 1))


def _check_layer(params, m):
    if not 2 <= m <= params.depth:
        raise ValueError(f"layer index must lie in [2, {params.depth}], got {m}")


def _apply(params, cache, ts, mode, parts=None):
    """Apply the GL actions ``{m: T_m}`` jointly, from the top pair downward.

    Working top-down, every pair only ever needs activations of the
    untransformed network, so all pseudoinverses come from one forward pass.
    When ``parts`` is a dict it receives, per layer, the weight before its
    own right factor, that factor ``g^-1`` and the pre-image used by the
    correction from the pair above; the gradient pull-back needs them.
    """
    bias, slope = params.bias, params.slope
    linear = slope == 1.0
    acts = cache.acts
    new = list(params.weights)
    for k in range(params.depth, 0, -1):
        w = params.weights[k - 1]
        target = None
        upper = ts.get(k + 1)
        if upper is not None:
            g = _plus_identity(upper)
            if linear:
                w = g @ w
            else:
                target = leaky_inverse(g @ acts.h[k], slope)
                w = w + (target - acts.z[k]) @ cache.pinv(k + 1)
        base, ginv = w, None
        own = ts.get(k)
        if own is not None:
            ginv = _group_inverse(own, mode)
            if bias:
                w = np.hstack([w[:, :-1] @ ginv, w[:, -1:]])
            else:
                w = w @ ginv
        new[k - 1] = w
        if parts is not None:
            parts[k] = (base, ginv, target)
    return params.replace(new)


def gl_act(params, act, cached=None):
    """Apply one GL action to the layer pair ``(act.layer, act.layer - 1)``.

    ``cached`` is ``forward(params, X)`` for the data that defines the action.
    Raises :class:`DegenerateActivationError` when ``h_{m-2}`` is rank
    deficient and ``ValueError`` for a singular ``I + T`` in exact mode.
    """
    _check_layer(params, act.layer)
    d = params.dims[act.layer - 1]
    T = np.asarray(act.T, dtype=np.float64)
    if T.shape != (d, d):
        raise ValueError(f"T must be {d}x{d} for layer pair {act.layer}")
    if cached is None:
        raise ValueError("gl_act needs the cached activations of the defining data")
    return _apply(params, _PairCache(params, cached), {act.layer: T}, act.mode)


def gl_act_all(params, ts, cached, mode=Mode.EXACT):
    """Jointly apply actions ``{m: T_m}`` on several layer pairs."""
    for m, T in ts.items():
        _check_layer(params, m)
        d = params.dims[m - 1]
        if np.shape(T) != (d, d):
            raise ValueError(f"T must be {d}x{d} for layer pair {m}")
    return _apply(params, _PairCache(params, cached), dict(ts), mode)


def usable_layers(params, acts, layers=None, cache=None):
    """Subset of ``layers`` whose ``h_{m-2}`` admits a left inverse.

    Rank-deficient pairs are dropped with a warning instead of failing.
    """
    layers = teleportable_layers(params) if layers is None else tuple(layers)
    cache = _PairCache(params, acts) if cache is None else cache
    keep = []
    for m in layers:
        _check_layer(params, m)
        if params.slope == 1.0 or cache.ok(m):
            keep.append(m)
        else:
            warnings.warn(f"skipping layer pair {m}: h_{m - 2} is rank deficient",
                          RuntimeWarning, stacklevel=2)
    return tuple(keep)


def teleport_objective(params, X, Y, ts, loss="mse", mode=Mode.EXACT, acts=None):
    """``||grad L(g . W)||^2`` for the joint action ``{m: T_m}``."""
    acts = forward(params, X) if acts is None else acts
    moved = gl_act_all(params, ts, acts, mode)
    _, grads = loss_grad(moved, X, Y, loss)
    return float(sum(np.sum(g * g) for g in grads))


def teleport_objective_grad(params, X, Y, layers, loss="mse", acts=None, cache=None,
                            ts=None, mode=Mode.EXACT):
    """Teleport objective and its gradient w.r.t. every ``T_m``.

    ``params`` is the anchor; ``ts`` (default all zero) is the current
    group element. Uses ``d||grad L||^2 / dW = 2 H grad L`` at the moved
    weights and pulls it back through the action by hand. Returns
    ``(objective, {m: dJ/dT_m})``.
    """
    acts = forward(params, X) if acts is None else acts
    Y = _check_targets(params, acts, Y)
    cache = _PairCache(params, acts) if cache is None else cache
    bias, slope = params.bias, params.slope
    ts = {} if ts is None else {m: t for m, t in ts.items() if m in layers}
    parts = {}
    if ts:
        moved = _apply(params, cache, ts, mode, parts)
        macts = forward(moved, X)
    else:
        moved, macts = params, acts
        parts = {k: (params.weights[k - 1], None, None) for k in range(1, params.depth + 1)}
    grads, deltas = _backprop(moved, macts, _output_delta(macts.output, Y, loss))
    objective = float(sum(np.vdot(g, g) for g in grads))
    upstream = [2.0 * u for u in hvp(moved, X, Y, grads, loss, macts, deltas)]

    def through_own_factor(k):
        # dJ/d(base_k) where W_k' = base_k g_k^-1 on the non-bias columns
        base, ginv, _ = parts[k]
        u = upstream[k - 1]
        if ginv is None:
            return u
        core = _core(u, bias) @ ginv.T
        return np.hstack([core, u[:, -1:]]) if bias else core

    out = {}
    for m in layers:
        base, ginv, _ = parts[m]
        # dJ/d(g^-1), then through g^-1 = (I+T)^-1 or I - T
        d_ginv = _core(base, bias).T @ _core(upstream[m - 1], bias)
        if ginv is not None and mode is Mode.EXACT:
            d_t = -ginv.T @ d_ginv @ ginv.T
        else:
            d_t = -d_ginv
        # W_{m-1} depends on g through sigma^-1(g sigma(Z_{m-1}))
        u_low = through_own_factor(m - 1)
        if slope == 1.0:
            d_t = d_t + u_low @ params.weights[m - 2].T
        else:
            target = parts[m - 1][2]
            deriv = _deriv(acts, m - 1, slope) if target is None else leaky_deriv(target, slope)
            grad_p = (u_low @ cache.pinv(m).T) / deriv
            d_t = d_t + grad_p @ acts.h[m - 1].T
        out[m] = d_t
    return objective, out


def teleport_objective_grad_fd(params, X, Y, layers, loss="mse", step=1e-5,
                               mode=Mode.EXACT, ts=None):
    """Central finite differences of the teleport objective over every T entry.

    Differentiates at ``ts`` (default all zero). Costs
    ``2 * sum(d_{m-1}^2)`` backprops; meant as a reference for small nets.
    """
    acts = forward(params, X)
    base = {m: np.zeros((params.dims[m - 1],) * 2) for m in layers}
    if ts is not None:
        base.update({m: np.array(t, dtype=np.float64) for m, t in ts.items() if m in layers})
    out = {}
    for m in layers:
        grad = np.zeros_like(base[m])
        for idx in np.ndindex(grad.shape):
            vals = []
            for sign in (1.0, -1.0):
                ts = {k: v.copy() for k, v in base.items()}
                ts[m][idx] += sign * step
                vals.append(teleport_objective(params, X, Y, ts, loss, mode, acts))
            grad[idx] = (vals[0] - vals[1]) / (2.0 * step)
        out[m] = grad
    return out


def random_params(rng, dims, slope=DEFAULT_SLOPE, bias=False, low=0.0, high=1.0):
    """Weights drawn uniformly on ``[low, high)`` for widths ``dims``."""
    extra = 1 if bias else 0
    ws = [rng.uniform(low, high, size=(dims[i + 1], dims[i] + extra))
          for i in range(len(dims) - 1)]
    return MlpParams(tuple(ws), slope, bias)


def fanin_params(rng, dims, slope=DEFAULT_SLOPE, bias=False):
    """Weights uniform on ``[-1/sqrt(fan_in), 1/sqrt(fan_in))`` per layer."""
    extra = 1 if bias else 0
    ws = []
    for i in range(len(dims) - 1):
        bound = 1.0 / math.sqrt(dims[i] + extra)
        ws.append(rng.uniform(-bound, bound, size=(dims[i + 1], dims[i] + extra)))
    return MlpParams(tuple(ws), slope, bias)


class MlpModel:
    """Teleportable loss model over flattened MLP weights for fixed data.

    Group parameters are the concatenated ``T_m`` matrices of the layer
    pairs in ``layers``; the identity is all zeros.
    """

    def __init__(self, template, X, Y, loss="mse", layers=None):
        self.template = template
        self.X = np.asarray(X, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.float64)
        self.loss_kind = loss
        self.layers = teleportable_layers(template) if layers is None else tuple(layers)
        self._tdims = {m: template.dims[m - 1] for m in self.layers}
        self._memo = None

    def with_data(self, X, Y):
        return MlpModel(self.template, X, Y, self.loss_kind, self.layers)

    def params(self, w):
        return self.template.from_vec(w)

    def loss(self, w):
        acts = forward(self.params(w), self.X)
        return output_loss(acts.output, self.Y, self.loss_kind)

    def loss_grad(self, w):
        value, grads = loss_grad(self.params(w), self.X, self.Y, self.loss_kind)
        return value, np.concatenate([g.ravel() for g in grads])

    def grad(self, w):
        return self.loss_grad(w)[1]

    def group_size(self):
        return sum(d * d for d in self._tdims.values())

    def group_init(self, w, rng=None):
        return np.zeros(self.group_size())

    def _unpack(self, gparam):
        ts, start = {}, 0
        for m in self.layers:
            d = self._tdims[m]
            ts[m] = np.reshape(gparam[start:start + d * d], (d, d))
            start += d * d
        return ts

    def _pack(self, ts):
        return np.concatenate([np.ravel(ts.get(m, np.zeros((self._tdims[m],) * 2)))
                               for m in self.layers])

    def _state(self, w):
        # every ascent step of a teleport works from the same anchor; reuse
        # its forward pass and pseudoinverses.
        key = np.asarray(w, dtype=np.float64).tobytes()
        if self._memo is None or self._memo[0] != key:
            params = self.params(w)
            acts = forward(params, self.X)
            cache = _PairCache(params, acts)
            usable = usable_layers(params, acts, self.layers, cache)
            self._memo = (key, params, acts, cache, usable)
        return self._memo[1:]

    def act(self, w, gparam, mode=Mode.EXACT):
        params, _, cache, usable = self._state(w)
        ts = {m: t for m, t in self._unpack(gparam).items() if m in usable}
        return _apply(params, cache, ts, mode).to_vec()

    def objective_grad(self, w, gparam=None, mode=Mode.EXACT):
        """Teleport objective at ``gparam . w`` and its gradient in ``gparam``."""
        params, acts, cache, usable = self._state(w)
        ts = None
        if gparam is not None and np.any(gparam):
            ts = {m: t for m, t in self._unpack(gparam).items() if m in usable}
        objective, grads = teleport_objective_grad(params, self.X, self.Y, usable,
                                                   self.loss_kind, acts, cache, ts, mode)
        return objective, self._pack(grads)
