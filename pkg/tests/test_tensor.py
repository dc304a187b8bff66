"""Autodiff core: every op's backward pass against finite differences, plus
shape/domain error contracts and graph-traversal behavior."""

import numpy as np
import pytest

from distillfuse.tensor import (
    DomainError,
    Parameter,
    ShapeError,
    Tensor,
    clamp_min,
    concat,
    embedding,
    softmax,
)
from helpers import check_grads, rel_err


def test_tensor_holds_float64_and_shape():
    t = Tensor([[1, 2], [3, 4]])
    assert t.data.dtype == np.float64
    assert t.shape == (2, 2)
    assert t.ndim == 2 and t.size == 4


def test_item_requires_scalar():
    assert Tensor(3.5).item() == 3.5
    with pytest.raises(ValueError):
        Tensor([1.0, 2.0]).item()


def test_backward_requires_scalar():
    t = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(RuntimeError):
        (t * 2.0).backward()


# ------------------------------------------------------- elementwise grads


def test_add_mul_sub_div_grads():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(3, 4)) + 3.0  # keep divisors away from zero
        check_grads(lambda x, y: ((x + y) * (x - y) / y).sum(), [a, b])


def test_broadcast_grads_row_and_scalar():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(4, 5))
    row = rng.normal(size=(5,))
    check_grads(lambda x, r: (x * r + r).sum(), [a, row])
    check_grads(lambda x: (x * 2.5 + 1.0).sum(), [a])


def test_neg_pow_grads():
    rng = np.random.default_rng(2)
    a = rng.uniform(0.5, 2.0, size=(3, 3))
    check_grads(lambda x: (-x).sum(), [a])
    check_grads(lambda x: (x ** 3.0).sum(), [a])
    check_grads(lambda x: (x ** -1.5).sum(), [a])


def test_pow_negative_base_fractional_exponent_rejected():
    t = Tensor([-1.0], requires_grad=True)
    with pytest.raises(DomainError):
        t ** 0.5
    # integer exponents on negative bases are fine
    assert float((t ** 2.0).data[0]) == 1.0


def test_unary_grads():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(2, 5))
    check_grads(lambda x: x.exp().sum(), [a])
    check_grads(lambda x: x.sigmoid().sum(), [a])
    check_grads(lambda x: x.tanh().sum(), [a])
    pos = rng.uniform(0.1, 3.0, size=(2, 5))
    check_grads(lambda x: x.log().sum(), [pos])


def test_log_domain_error():
    with pytest.raises(DomainError):
        Tensor([0.0]).log()
    with pytest.raises(DomainError):
        Tensor([-1.0]).log()


def test_relu_grad_away_from_kink():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(4, 4))
    a[np.abs(a) < 0.05] = 0.5  # keep clear of the nondifferentiable point
    check_grads(lambda x: x.relu().sum(), [a])


def test_relu_zero_gradient_on_negatives():
    t = Tensor([-2.0, 3.0], requires_grad=True)
    t.relu().sum().backward()
    assert t.grad[0] == 0.0 and t.grad[1] == 1.0


def test_sigmoid_stable_at_extreme_inputs():
    y = Tensor([-800.0, 800.0]).sigmoid().data
    assert np.all(np.isfinite(y))
    assert y[0] == pytest.approx(0.0, abs=1e-300)
    assert y[1] == pytest.approx(1.0)


# ------------------------------------------------------- reductions / shape


def test_sum_mean_axis_keepdims_grads():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 4, 2))
    check_grads(lambda x: x.sum().sum(), [a])
    check_grads(lambda x: x.sum(axis=1).sum(), [a])
    check_grads(lambda x: x.mean(axis=(0, 2), keepdims=True).sum(), [a])
    check_grads(lambda x: x.mean().sum(), [a])


def test_mean_value_matches_numpy():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(4, 6))
    got = Tensor(a).mean(axis=1).data
    np.testing.assert_allclose(got, a.mean(axis=1), rtol=0, atol=0)


def test_reshape_transpose_grads():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(24,))
    check_grads(lambda x, v: (x.reshape(24) * v).sum(), [a, w])
    check_grads(lambda x: (x.transpose(2, 0, 1) * 1.5).sum(), [a])
    check_grads(lambda x: (x.transpose() * 0.5).sum(), [rng.normal(size=(3, 5))])


def test_getitem_grad_scatters_with_repeats():
    t = Tensor(np.arange(4.0), requires_grad=True)
    idx = np.array([0, 0, 2])
    t[idx].sum().backward()
    np.testing.assert_array_equal(t.grad, [2.0, 0.0, 1.0, 0.0])


def test_getitem_slice_grad():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(4, 5))
    check_grads(lambda x: (x[1:3, ::2] ** 2.0).sum(), [a])


# ------------------------------------------------------- matmul


def test_matmul_grads_2d():
    rng = np.random.default_rng(9)
    for _ in range(5):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        check_grads(lambda x, y: (x @ y).sum(), [a, b])


def test_matmul_grads_batched_broadcast():
    rng = np.random.default_rng(10)
    a = rng.normal(size=(5, 2, 3, 4))
    b = rng.normal(size=(1, 4, 6))
    check_grads(lambda x, y: ((x @ y) ** 2.0).sum(), [a, b])


def test_matmul_inner_dim_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))


def test_matmul_requires_2d():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)) @ Tensor(np.ones((3, 2)))


def test_matmul_batch_broadcast_mismatch():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3, 4))) @ Tensor(np.ones((3, 4, 5)))


# ------------------------------------------------------- module functions


def test_softmax_rows_sum_to_one_and_grads():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(6, 4)) * 3.0
    y = softmax(Tensor(a), axis=1).data
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
    w = rng.normal(size=(6, 4))
    check_grads(lambda x, v: (softmax(x, axis=1) * v).sum(), [a, w])
    check_grads(lambda x, v: (softmax(x, axis=0) * v).sum(), [a, w])


def test_softmax_shift_invariance():
    rng = np.random.default_rng(12)
    a = rng.normal(size=(3, 5))
    y1 = softmax(Tensor(a), axis=1).data
    y2 = softmax(Tensor(a + 1000.0), axis=1).data
    np.testing.assert_allclose(y1, y2, atol=1e-12)


def test_clamp_min_value_and_grad_mask():
    t = Tensor([-1.0, 0.5, 2.0], requires_grad=True)
    y = clamp_min(t, 1.0)
    np.testing.assert_array_equal(y.data, [1.0, 1.0, 2.0])
    y.sum().backward()
    np.testing.assert_array_equal(t.grad, [0.0, 0.0, 1.0])


def test_concat_values_and_grads():
    rng = np.random.default_rng(13)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 5))
    got = concat([Tensor(a), Tensor(b)], axis=1).data
    np.testing.assert_array_equal(got, np.concatenate([a, b], axis=1))
    check_grads(lambda x, y: (concat([x, y], axis=1) ** 2.0).sum(), [a, b])


def test_concat_shape_mismatch():
    with pytest.raises(ShapeError):
        concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


def test_embedding_gather_and_scatter_grad():
    table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    ids = np.array([[1, 1], [3, 0]])
    out = embedding(table, ids)
    assert out.shape == (2, 2, 3)
    np.testing.assert_array_equal(out.data[0, 0], [3.0, 4.0, 5.0])
    out.sum().backward()
    # row 1 was gathered twice, rows 0 and 3 once, row 2 never
    np.testing.assert_array_equal(table.grad[:, 0], [1.0, 2.0, 0.0, 1.0])


def test_embedding_out_of_range():
    table = Tensor(np.ones((4, 3)))
    with pytest.raises(IndexError):
        embedding(table, np.array([4]))
    with pytest.raises(IndexError):
        embedding(table, np.array([-1]))


# ------------------------------------------------------- graph behavior


def test_diamond_graph_accumulates_both_paths():
    x = Tensor(2.0, requires_grad=True)
    y = x * 3.0
    z = (y * y + y).sum()  # dz/dx = (2y + 1) * 3 = 39 at x=2
    z.backward()
    assert x.grad == pytest.approx(39.0)


def test_no_tape_when_nothing_requires_grad():
    a = Tensor(np.ones((2, 2)))
    b = Tensor(np.ones((2, 2)))
    c = a @ b + a
    assert c._parents == ()
    assert not c.requires_grad


def test_deep_chain_does_not_recurse():
    # iterative traversal must survive depths that would blow the stack
    x = Tensor(1.0, requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0
    y.sum().backward()
    assert x.grad == pytest.approx(1.0)


def test_grad_accumulates_across_backwards():
    x = Tensor(3.0, requires_grad=True)
    (x * 2.0).sum().backward()
    (x * 2.0).sum().backward()
    assert x.grad == pytest.approx(4.0)


# ------------------------------------------------------- Parameter


def test_parameter_trainable_with_preallocated_grad():
    p = Parameter(np.zeros((2, 2)))
    assert p.requires_grad and p.trainable
    assert p.grad is not None and p.grad.shape == (2, 2)


def test_parameter_zero_grad_resets():
    p = Parameter(np.ones(3))
    (p * 2.0).sum().backward()
    np.testing.assert_array_equal(p.grad, 2.0 * np.ones(3))
    p.zero_grad()
    np.testing.assert_array_equal(p.grad, np.zeros(3))


def test_parameter_freeze_stops_gradients():
    p = Parameter(np.ones(3))
    p.freeze()
    out = (p * 2.0).sum()
    assert not out.requires_grad
    assert not p.trainable


def test_rel_err_helper_is_scale_aware():
    a = np.array([1e8, 2e8])
    assert rel_err(a, a * (1 + 1e-9)) < 1e-6
    assert rel_err(np.zeros(2), np.zeros(2)) == 0.0
