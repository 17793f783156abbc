import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedlayers.autodiff import tensor as T
from fedlayers.autodiff.optim import AdamW, OptimizerError
from fedlayers.autodiff.tensor import (
    BatchTooSmallError,
    LabelError,
    RankError,
    ShapeError,
    Tensor,
)

from conftest import numerical_grad, rel_err

LAMBDA = 1.0507009873554805
ALPHA = 1.6732632423543772


# -- matmul ---------------------------------------------------------------
def test_matmul_identity(rng):
    X = rng.normal(size=(3, 5))
    out = T.matmul(Tensor(np.eye(3)), Tensor(X))
    assert np.array_equal(out.data, X)


def test_matmul_zeros():
    out = T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.ones((3, 2))))
    assert np.array_equal(out.data, np.zeros((2, 2)))


def test_matmul_matches_triple_loop():
    r = np.random.default_rng(0)
    a, b = r.normal(size=(2, 3)), r.normal(size=(3, 2))
    expected = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(3):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, expected, rtol=0, atol=1e-12)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))


# -- selu -----------------------------------------------------------------
def test_selu_values():
    out = T.selu(Tensor(np.array([0.0, 1.0, -20.0]))).data
    assert out[0] == 0.0
    assert out[1] == 1.0507009873554805
    assert out[2] == pytest.approx(LAMBDA * ALPHA * (math.exp(-20) - 1), rel=1e-15)
    # saturates at -lambda*alpha; exp(-20) ~ 2e-9 away
    assert out[2] == pytest.approx(-1.7580993408473766, abs=1e-8)


# -- batchnorm ------------------------------------------------------------
def _bn(x, training=True, rm=None, rv=None):
    d = x.shape[1]
    rm = np.zeros(d) if rm is None else rm
    rv = np.ones(d) if rv is None else rv
    w, b = Tensor(np.ones(d)), Tensor(np.zeros(d))
    return T.batch_norm(Tensor(x), w, b, rm, rv, training=training), rm, rv


def test_batchnorm_constant_column_is_zero():
    x = np.column_stack([np.full(6, 3.5), np.arange(6.0)])
    out, _, _ = _bn(x)
    assert np.array_equal(out.data[:, 0], np.zeros(6))


def test_batchnorm_standardized_input_passes_through(rng):
    x = rng.normal(size=(50, 3))
    x = (x - x.mean(0)) / x.std(0)
    d = 3
    w, b = rng.normal(size=d), rng.normal(size=d)
    out = T.batch_norm(Tensor(x), Tensor(w), Tensor(b), np.zeros(d), np.ones(d), training=True).data
    # eps = 1e-5 shrinks unit-variance input by 1/sqrt(1 + eps)
    np.testing.assert_allclose(out, x / math.sqrt(1 + 1e-5) * w + b, atol=1e-12)
    np.testing.assert_allclose(out, x * w + b, atol=1e-5 * np.abs(x * w).max())


def test_batchnorm_running_stats_two_batches(rng):
    x1, x2 = rng.normal(2.0, 3.0, size=(8, 2)), rng.normal(-1.0, 0.5, size=(5, 2))
    rm, rv = np.zeros(2), np.ones(2)
    _bn(x1, rm=rm, rv=rv)
    _bn(x2, rm=rm, rv=rv)
    # scalar recurrence per column: r <- 0.9 r + 0.1 stat, unbiased variance
    for j in range(2):
        m, v = 0.0, 1.0
        for xb in (x1[:, j], x2[:, j]):
            n = len(xb)
            mu = sum(xb) / n
            var = sum((t - mu) ** 2 for t in xb) / (n - 1)
            m = 0.9 * m + 0.1 * mu
            v = 0.9 * v + 0.1 * var
        assert rm[j] == pytest.approx(m, rel=1e-12)
        assert rv[j] == pytest.approx(v, rel=1e-12)


def test_batchnorm_eval_uses_running_stats():
    rm, rv = np.array([1.0]), np.array([4.0])
    out, _, _ = _bn(np.array([[3.0]]), training=False, rm=rm, rv=rv)
    assert out.data[0, 0] == pytest.approx(2.0 / math.sqrt(4.0 + 1e-5))


def test_batchnorm_train_needs_two_rows():
    with pytest.raises(BatchTooSmallError):
        _bn(np.ones((1, 3)))


# -- losses ---------------------------------------------------------------
def test_cross_entropy_uniform_logits():
    loss = T.softmax_cross_entropy(Tensor(np.zeros((3, 4))), np.array([0, 1, 3]))
    assert loss.item() == pytest.approx(math.log(4), abs=1e-12)
    assert loss.item() == pytest.approx(1.3862943611, abs=1e-10)


def test_cross_entropy_confident():
    logits = np.zeros((2, 3))
    labels = np.array([2, 0])
    logits[np.arange(2), labels] = 1000.0
    assert T.softmax_cross_entropy(Tensor(logits), labels).item() == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_matches_direct_formula():
    r = np.random.default_rng(1)
    logits = r.normal(size=(5, 3))
    labels = r.integers(0, 3, size=5)
    direct = np.mean([-math.log(math.exp(row[y]) / sum(math.exp(v) for v in row))
                      for row, y in zip(logits, labels)])
    assert T.softmax_cross_entropy(Tensor(logits), labels).item() == pytest.approx(direct, abs=1e-10)


def test_cross_entropy_label_error():
    with pytest.raises(LabelError, match="index 1"):
        T.softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_bce_zero_logit():
    loss = T.bce_with_logits(Tensor(np.zeros((4, 1))), np.array([0, 1, 1, 0]))
    assert loss.item() == pytest.approx(math.log(2), abs=1e-12)
    assert loss.item() == pytest.approx(0.6931471806, abs=1e-10)


def test_bce_confident():
    assert T.bce_with_logits(Tensor([[50.0]]), [1]).item() == pytest.approx(0.0, abs=1e-20)


def test_bce_matches_direct_formula(rng):
    x = rng.normal(scale=3, size=(20, 1))
    y = rng.integers(0, 2, size=20)
    p = 1 / (1 + np.exp(-x[:, 0]))
    direct = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert T.bce_with_logits(Tensor(x), y).item() == pytest.approx(direct, abs=1e-10)


def test_bce_label_error():
    with pytest.raises(LabelError):
        T.bce_with_logits(Tensor(np.zeros((2, 1))), [0, 2])


# -- backward -------------------------------------------------------------
def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_backward_zero_times_f_gives_zeros(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    (T.selu(x).sum() * 0.0).backward()
    assert np.array_equal(x.grad, np.zeros((3, 4)))


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(RankError):
        (x * 2.0).backward()


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = x * x
    (y + y).sum().backward()
    assert x.grad[0] == 12.0


def _check(build, shapes, seed, positive=False, tol=1e-5):
    r = np.random.default_rng(seed)
    arrs = [np.abs(r.normal(size=s)) + 0.5 if positive else r.normal(size=s) for s in shapes]
    ts = [Tensor(a, requires_grad=True) for a in arrs]
    weights = r.normal(size=build(*ts).shape)
    (build(*ts) * Tensor(weights)).sum().backward()
    for a, t in zip(arrs, ts):

        def f():
            return float((build(*[Tensor(b) for b in arrs]).data * weights).sum())

        num = numerical_grad(f, a)
        assert rel_err(t.grad, num) < tol


def _dropout(x):
    return T.dropout(x, 0.3, np.random.default_rng(7), training=True)


def _bn_train(x, w, b):
    return T.batch_norm(x, w, b, np.zeros(3), np.ones(3), training=True)


def _bn_eval(x, w, b):
    return T.batch_norm(x, w, b, np.array([0.5, -1.0, 0.0]), np.array([2.0, 0.5, 1.0]), training=False)


PRIMITIVES = {
    "add_broadcast": (lambda a, b: a + b, [(4, 3), (3,)], False),
    "mul_broadcast": (lambda a, b: a * b, [(4, 3), (4, 1)], False),
    "div": (lambda a, b: a / b, [(3, 2), (3, 2)], True),
    "sub": (lambda a, b: a - b, [(2, 3), (2, 3)], False),
    "matmul": (T.matmul, [(4, 3), (3, 5)], False),
    "matmul_batched": (T.matmul, [(2, 3, 4, 2), (2, 3, 2, 4)], False),
    "matmul_broadcast": (T.matmul, [(2, 4, 3), (3, 2)], False),
    "exp": (T.exp, [(3, 4)], False),
    "log": (T.log, [(3, 4)], True),
    "power": (lambda a: a ** 1.5, [(3, 4)], True),
    "sigmoid": (T.sigmoid, [(3, 4)], False),
    "selu": (T.selu, [(5, 4)], False),
    "gelu": (T.gelu, [(5, 4)], False),
    "softmax": (lambda a: T.softmax(a, axis=-1), [(3, 5)], False),
    "softmax_axis0": (lambda a: T.softmax(a, axis=0), [(3, 5)], False),
    "sum_axis": (lambda a: a.sum(axis=1), [(3, 4)], False),
    "mean_keepdims": (lambda a: a.mean(axis=0, keepdims=True), [(3, 4)], False),
    "reshape_transpose": (lambda a: a.reshape(2, 6).transpose(1, 0), [(3, 4)], False),
    "transpose_4d": (lambda a: a.transpose(0, 2, 1, 3), [(2, 3, 4, 2)], False),
    "layer_norm": (lambda x, w, b: T.layer_norm(x, w, b), [(2, 3, 6), (6,), (6,)], False),
    "batch_norm_train": (_bn_train, [(7, 3), (3,), (3,)], False),
    "batch_norm_eval": (_bn_eval, [(7, 3), (3,), (3,)], False),
    "dropout": (_dropout, [(6, 5)], False),
    "cross_entropy": (lambda a: T.softmax_cross_entropy(a, np.array([0, 2, 1, 2])), [(4, 3)], False),
    "bce": (lambda a: T.bce_with_logits(a, np.array([0, 1, 1, 0, 1])), [(5, 1)], False),
}


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name, seed):
    build, shapes, positive = PRIMITIVES[name]
    _check(build, shapes, seed, positive)


# -- properties -----------------------------------------------------------
@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 7), elements=st.floats(-500, 500)))
def test_softmax_rows_sum_to_one(x):
    s = T.softmax(Tensor(x)).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
def test_primitives_stay_finite(x):
    t = Tensor(x, requires_grad=True)
    outs = [
        T.selu(t), T.gelu(t), T.sigmoid(t), T.softmax(t),
        T.layer_norm(t, Tensor(np.ones(3)), Tensor(np.zeros(3))),
        T.batch_norm(t, Tensor(np.ones(3)), Tensor(np.zeros(3)), np.zeros(3), np.ones(3), True),
        T.softmax_cross_entropy(t, np.array([0, 1, 2, 0, 1, 2])),
        T.bce_with_logits(T.reshape(t, (18, 1)), np.tile([0, 1], 9)),
    ]
    total = outs[0].sum()
    for o in outs[1:]:
        assert np.all(np.isfinite(o.data))
        total = total + o.sum()
    total.backward()
    assert np.all(np.isfinite(t.grad))


def test_forward_backward_bit_identical():
    def run():
        r = np.random.default_rng(3)
        w = Tensor(r.normal(size=(4, 3)), requires_grad=True)
        x = Tensor(r.normal(size=(5, 4)))
        loss = T.softmax_cross_entropy(T.selu(T.matmul(x, w)), np.array([0, 1, 2, 0, 1]))
        loss.backward()
        return loss.data.tobytes() + w.grad.tobytes()

    assert run() == run()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad


# -- AdamW ----------------------------------------------------------------
def _adam_single(p0, g, wd, lr=0.001):
    p = Tensor(np.array([p0]), requires_grad=True)
    opt = AdamW([p], lr=lr, weight_decay=wd)
    p.grad = np.array([g])
    opt.step()
    return p.data[0], opt


def test_adamw_first_step():
    p, opt = _adam_single(1.0, 1.0, 0.0)
    # m_hat = g, v_hat = g^2 at t = 1
    assert p == pytest.approx(1.0 - 0.001 * 1.0 / (1.0 + 1e-8), abs=1e-15)
    assert p == pytest.approx(0.999, abs=1e-10)
    assert opt.state.step == 1


def test_adamw_zero_grad_no_decay_is_noop():
    p, _ = _adam_single(1.0, 0.0, 0.0)
    assert p == 1.0


def test_adamw_decoupled_decay_exact():
    p, _ = _adam_single(1.0, 0.0, 0.0001)
    assert p == 1 - 0.001 * 0.0001 * 1


def test_adamw_missing_grad():
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(OptimizerError):
        AdamW([p]).step()


def test_adamw_step_counter_and_state_shapes(rng):
    ps = [Tensor(rng.normal(size=(2, 3)), requires_grad=True), Tensor(rng.normal(size=4), requires_grad=True)]
    opt = AdamW(ps)
    for k in range(3):
        for p in ps:
            p.grad = rng.normal(size=p.shape)
        opt.step()
        assert opt.state.step == k + 1
    assert [m.shape for m in opt.state.m] == [p.shape for p in ps]
    assert [v.shape for v in opt.state.v] == [p.shape for p in ps]
