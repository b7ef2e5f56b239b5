import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symtele.errors import DegenerateActivationError
from symtele.fd import central_diff, rel_error
from symtele.mlp import (GlAction, Mode, MlpModel, MlpParams, fanin_params, forward, gl_act,
                         gl_act_all, hvp, leaky, leaky_deriv, leaky_inverse, loss_grad,
                         output_loss, random_params, teleport_objective,
                         teleport_objective_grad, teleport_objective_grad_fd, unflatten,
                         usable_layers)

REF_DIMS = [5, 6, 7, 8]
LOSSES = ["mse", "mean_mse", "norm", "xent"]
seeds = st.integers(0, 2**32 - 1)


def ref_instance(seed, slope=0.1, bias=False):
    r = np.random.default_rng(seed)
    params = random_params(r, REF_DIMS, slope, bias)
    X = r.uniform(size=(5, 4))
    Y = r.uniform(size=(8, 4))
    return params, X, Y


def one_hot_targets(r, classes, n):
    return np.eye(classes)[:, r.integers(0, classes, n)]


def rel_change(a, b):
    return abs(a - b) / abs(b)


def test_forward_examples():
    p = MlpParams((np.eye(2), np.eye(2)), slope=0.1)
    acts = forward(p, np.array([[1.0], [-1.0]]))
    np.testing.assert_allclose(acts.h[1].ravel(), [1.0, -0.1])
    zero = MlpParams((np.zeros((3, 2)), np.zeros((2, 3))))
    acts = forward(zero, np.ones((2, 4)))
    assert not np.any(acts.h[1]) and not np.any(acts.h[2])
    params, X, _ = ref_instance(0)
    assert params.shapes == ((6, 5), (7, 6), (8, 7))
    assert forward(params, X).output.shape == (8, 4)


def test_forward_shape_errors():
    params, X, Y = ref_instance(0)
    with pytest.raises(ValueError):
        forward(params, X[:4])
    with pytest.raises(ValueError):
        loss_grad(params, X, Y[:, :3])
    with pytest.raises(ValueError):
        MlpParams((np.ones((3, 2)), np.ones((2, 4))))
    with pytest.raises(ValueError):
        MlpParams((np.ones((3, 2)),), slope=0.0)


def test_perfect_fit_has_zero_loss_and_gradient():
    params, X, _ = ref_instance(1)
    Y = forward(params, X).output
    value, grads = loss_grad(params, X, Y)
    assert value == 0.0
    assert all(not np.any(g) for g in grads)


def test_scalar_chain_rule_example():
    params = MlpParams((np.array([[2.0]]),))
    value, grads = loss_grad(params, np.array([[1.0]]), np.array([[0.0]]))
    assert value == 4.0
    assert grads[0][0, 0] == 4.0


def test_leaky_inverse_examples():
    assert leaky_inverse(5.0, 0.1) == 5.0
    assert leaky_inverse(-0.3, 0.1) == pytest.approx(-3.0)
    with pytest.raises(ValueError):
        leaky_inverse(1.0, 0.0)


@given(x=st.floats(-1e6, 1e6), slope=st.floats(0.01, 1.0))
def test_leaky_round_trip(x, slope):
    assert leaky_inverse(leaky(x, slope), slope) == pytest.approx(x, rel=1e-12, abs=1e-12)
    assert leaky_deriv(x, slope) == (1.0 if x >= 0 else slope)


def test_output_loss_variants():
    out = np.array([[1.0, 2.0], [3.0, 4.0]])
    Y = np.zeros((2, 2))
    assert output_loss(out, Y, "mse") == 30.0
    assert output_loss(out, Y, "mean_mse") == 7.5
    assert output_loss(out, Y, "norm") == pytest.approx(30.0 ** 0.5)
    xent = output_loss(np.zeros((2, 2)), np.eye(2), "xent")
    assert xent == pytest.approx(np.log(2.0))
    with pytest.raises(ValueError):
        output_loss(out, Y, "hinge")


@pytest.mark.parametrize("loss", LOSSES)
@pytest.mark.parametrize("bias", [False, True])
def test_backprop_matches_finite_differences(loss, bias):
    r = np.random.default_rng(3)
    params = random_params(r, REF_DIMS, bias=bias, low=-1.0)
    X = r.uniform(size=(5, 4))
    Y = one_hot_targets(r, 8, 4) if loss == "xent" else r.uniform(size=(8, 4))
    _, grads = loss_grad(params, X, Y, loss)
    vec = params.to_vec()

    def f(v):
        return output_loss(forward(params.from_vec(v), X).output, Y, loss)

    fd = central_diff(f, vec, 1e-6)
    assert rel_error(np.concatenate([g.ravel() for g in grads]), fd) <= 1e-5


@pytest.mark.parametrize("loss", LOSSES)
def test_hessian_vector_product_matches_gradient_differences(loss):
    r = np.random.default_rng(4)
    params = random_params(r, REF_DIMS, low=-1.0)
    X = r.uniform(size=(5, 4))
    Y = one_hot_targets(r, 8, 4) if loss == "xent" else r.uniform(size=(8, 4))
    direction = [r.normal(size=w.shape) for w in params.weights]
    hv = np.concatenate([h.ravel() for h in hvp(params, X, Y, direction, loss)])
    vec, dvec = params.to_vec(), np.concatenate([d.ravel() for d in direction])

    def g(t):
        _, gs = loss_grad(params.from_vec(vec + t * dvec), X, Y, loss)
        return np.concatenate([x.ravel() for x in gs])

    eps = 1e-6
    assert rel_error(hv, (g(eps) - g(-eps)) / (2 * eps)) <= 1e-5


def test_identity_action_leaves_weights_unchanged():
    params, X, _ = ref_instance(2)
    acts = forward(params, X)
    for m in (2, 3):
        out = gl_act(params, GlAction(m, np.zeros((params.dims[m - 1],) * 2)), acts)
        for a, b in zip(out.weights, params.weights):
            np.testing.assert_allclose(a, b, atol=1e-12)


@given(seed=seeds, m=st.sampled_from([2, 3]))
def test_exact_action_preserves_loss_and_outputs(seed, m):
    params, X, Y = ref_instance(seed)
    r = np.random.default_rng(seed + 1)
    d = params.dims[m - 1]
    T = r.normal(size=(d, d))
    T *= 0.1 / np.linalg.norm(T)
    acts = forward(params, X)
    moved = gl_act(params, GlAction(m, T), acts)
    before, _ = loss_grad(params, X, Y)
    after, _ = loss_grad(moved, X, Y)
    assert rel_change(after, before) <= 1e-6
    new_acts = forward(moved, X)
    for k in range(m, params.depth + 1):
        np.testing.assert_allclose(new_acts.h[k], acts.h[k], rtol=1e-6, atol=1e-9)
    for k, (a, b) in enumerate(zip(moved.weights, params.weights), start=1):
        if k not in (m, m - 1):
            assert a is b or np.array_equal(a, b)


def test_first_order_action_error_is_quadratic():
    params, X, Y = ref_instance(5)
    acts = forward(params, X)
    base, _ = loss_grad(params, X, Y)
    T = np.random.default_rng(6).normal(size=(7, 7))
    T *= 0.05 / np.linalg.norm(T)
    errs = []
    for scale in (1.0, 0.5, 0.25):
        moved = gl_act(params, GlAction(3, scale * T, Mode.FIRST_ORDER), acts)
        errs.append(abs(loss_grad(moved, X, Y)[0] - base))
    assert 3 <= errs[0] / errs[1] <= 5
    assert 3 <= errs[1] / errs[2] <= 5


def test_action_composition():
    params, X, Y = ref_instance(7)
    r = np.random.default_rng(8)
    t1, t2 = 0.1 * r.normal(size=(6, 6)), 0.1 * r.normal(size=(6, 6))
    once = gl_act(params, GlAction(2, t2), forward(params, X))
    twice = gl_act(once, GlAction(2, t1), forward(once, X))
    g12 = (np.eye(6) + t1) @ (np.eye(6) + t2)
    joint = gl_act(params, GlAction(2, g12 - np.eye(6)), forward(params, X))
    for a, b in zip(twice.weights, joint.weights):
        np.testing.assert_allclose(a, b, atol=1e-8)


def test_linear_network_action_is_plain_matrix_product():
    r = np.random.default_rng(9)
    params = random_params(r, REF_DIMS, slope=1.0)
    T = 0.2 * r.normal(size=(7, 7))
    g = np.eye(7) + T
    for X in (r.uniform(size=(5, 4)), r.normal(size=(5, 9))):
        moved = gl_act(params, GlAction(3, T), forward(params, X))
        np.testing.assert_allclose(moved.weights[2], params.weights[2] @ np.linalg.inv(g),
                                   atol=1e-10)
        np.testing.assert_allclose(moved.weights[1], g @ params.weights[1], atol=1e-10)


def test_joint_actions_preserve_loss():
    params, X, Y = ref_instance(10)
    r = np.random.default_rng(11)
    ts = {2: 0.05 * r.normal(size=(6, 6)), 3: 0.05 * r.normal(size=(7, 7))}
    moved = gl_act_all(params, ts, forward(params, X))
    assert rel_change(loss_grad(moved, X, Y)[0], loss_grad(params, X, Y)[0]) <= 1e-6


def test_action_errors():
    params, X, _ = ref_instance(12)
    acts = forward(params, X)
    with pytest.raises(ValueError):
        gl_act(params, GlAction(1, np.zeros((5, 5))), acts)
    with pytest.raises(ValueError):
        gl_act(params, GlAction(2, np.zeros((5, 5))), acts)
    with pytest.raises(ValueError):
        gl_act(params, GlAction(2, -np.eye(6)), acts)
    wide = random_params(np.random.default_rng(0), [3, 6, 7, 8])
    narrow_x = np.random.default_rng(1).uniform(size=(3, 5))
    with pytest.raises(DegenerateActivationError):
        gl_act(wide, GlAction(2, 0.1 * np.eye(6)), forward(wide, narrow_x))


def test_rank_deficient_pairs_are_skipped_with_warning():
    params = random_params(np.random.default_rng(0), [3, 6, 7, 8])
    X = np.random.default_rng(1).uniform(size=(3, 5))
    with pytest.warns(RuntimeWarning):
        keep = usable_layers(params, forward(params, X))
    # h_0 = X (3 x 5) and h_1 (rank <= 3, 5 columns) both lack column rank
    assert keep == ()
    X_ok = np.random.default_rng(2).uniform(size=(3, 3))
    assert usable_layers(params, forward(params, X_ok)) == (2, 3)


@pytest.mark.parametrize("loss", LOSSES)
@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("slope, bias", [(0.1, False), (0.1, True), (1.0, False)])
def test_teleport_gradient_matches_finite_differences(loss, mode, slope, bias):
    r = np.random.default_rng(13)
    params = random_params(r, REF_DIMS, slope, bias, low=-1.0)
    X = r.uniform(size=(5, 4))
    Y = one_hot_targets(r, 8, 4) if loss == "xent" else r.uniform(size=(8, 4))
    layers = [2, 3]
    for ts in (None, {m: 0.1 * r.normal(size=(params.dims[m - 1],) * 2) for m in layers}):
        value, grad = teleport_objective_grad(params, X, Y, layers, loss, ts=ts, mode=mode)
        fd = teleport_objective_grad_fd(params, X, Y, layers, loss, mode=mode, ts=ts)
        expected = teleport_objective(params, X, Y, ts or {}, loss, mode)
        assert value == pytest.approx(expected, rel=1e-10)
        for m in layers:
            assert rel_error(grad[m], fd[m]) <= 1e-5


def test_model_round_trip_and_packing():
    params, X, Y = ref_instance(14)
    model = MlpModel(params, X, Y)
    w = params.to_vec()
    assert model.group_size() == 36 + 49
    assert not np.any(model.group_init(w))
    np.testing.assert_array_equal(model.act(w, np.zeros(model.group_size())), w)
    shapes = params.shapes
    assert [a.shape for a in unflatten(w, shapes)] == list(shapes)
    with pytest.raises(ValueError):
        unflatten(w[:-1], shapes)


def test_model_objective_gradient_matches_direct_evaluation():
    params, X, Y = ref_instance(15)
    model = MlpModel(params, X, Y, "mean_mse")
    w = params.to_vec()
    gp = 0.05 * np.random.default_rng(16).normal(size=model.group_size())
    value, grad = model.objective_grad(w, gp, Mode.EXACT)
    moved = model.act(w, gp, Mode.EXACT)
    g = model.grad(moved)
    assert value == pytest.approx(float(g @ g), rel=1e-10)

    def f(x):
        v = model.grad(model.act(w, x, Mode.EXACT))
        return float(v @ v)

    assert rel_error(grad, central_diff(f, gp, 1e-6)) <= 1e-5


def test_fanin_init_bounds():
    params = fanin_params(np.random.default_rng(0), [784, 64, 10])
    assert np.abs(params.weights[0]).max() <= 1 / 28
    assert np.abs(params.weights[1]).max() <= 1 / 8
