"""Tensor core: op semantics plus finite-difference gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vld.errors import ConfigError, ContractError, ShapeError
from vld.gradcheck import check_gradients, max_relative_error, numeric_gradient
from vld.rng import Rng
from vld.tensor import (Tensor, broadcast_to, clamp_max, concat, div, gelu,
                        layer_norm, logsumexp, matmul, no_grad, reshape,
                        softmax, softplus, swap_axes, texp, tlog, transpose,
                        tsqrt, ttanh)


def rand(shape, seed=0, std=1.0):
    return Rng(100 + seed).normal(shape, std=std)


# -- matmul -------------------------------------------------------------------


def test_matmul_identity():
    b = rand((3, 5))
    out = matmul(Tensor(np.eye(3)), Tensor(b))
    np.testing.assert_array_equal(out.data, b)


def test_matmul_permutation_example():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(matmul(a, b).data, [[2.0, 1.0], [4.0, 3.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        matmul(Tensor(np.zeros((4, 5))), Tensor(np.zeros((4, 3))))
    assert "(4, 5)" in str(exc.value) and "(4, 3)" in str(exc.value)


def test_matmul_gradients_match_finite_differences():
    a = Tensor(rand((4, 5), 1), requires_grad=True)
    b = Tensor(rand((5, 3), 2), requires_grad=True)
    weight = rand((4, 3), 3)

    def loss():
        return (matmul(a, b) * weight).sum()

    errs = check_gradients(loss, [("a", a), ("b", b)])
    assert max(errs.values()) < 1e-6


def test_matmul_batched_broadcast_gradients():
    a = Tensor(rand((2, 3, 4, 5), 4, std=0.5), requires_grad=True)
    b = Tensor(rand((5, 3), 5), requires_grad=True)
    weight = rand((2, 3, 4, 3), 6)

    def loss():
        return (matmul(a, b) * weight).sum()

    errs = check_gradients(loss, [("a", a), ("b", b)])
    assert max(errs.values()) < 1e-6


# -- softmax ------------------------------------------------------------------


def test_softmax_uniform():
    out = softmax(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_no_overflow():
    out = softmax(Tensor([1000.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1.0, 0.0, 0.0], atol=1e-12)


def test_softmax_jacobian_matches_finite_differences():
    x = Tensor(rand((7,), 7), requires_grad=True)
    base = softmax(x).data
    h = 1e-5
    for i in range(7):
        x.grad = None
        y = softmax(x)
        y[i].backward()
        analytic = np.array(x.grad)
        numeric = np.zeros(7)
        with no_grad():
            for j in range(7):
                saved = x.data[j]
                x.data[j] = saved + h
                up = softmax(x).data[i]
                x.data[j] = saved - h
                down = softmax(x).data[i]
                x.data[j] = saved
                numeric[j] = (up - down) / (2 * h)
        assert max_relative_error(analytic, numeric) < 1e-6
    np.testing.assert_allclose(softmax(x).data, base)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=9))
def test_softmax_slices_sum_to_one(values):
    out = softmax(Tensor(values))
    assert abs(out.data.sum() - 1.0) < 1e-12
    assert (out.data >= 0).all()


# -- layer norm ---------------------------------------------------------------


def test_layer_norm_constant_row_collapses_to_zero():
    x = Tensor(np.full((2, 6), 3.7))
    out = layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_layer_norm_symmetric_row():
    out = layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-4)
    assert out.data[0, 0] < 1.0  # epsilon pulls slightly inside unit variance


def test_layer_norm_rejects_scalar_axis():
    with pytest.raises(ConfigError):
        layer_norm(Tensor([[1.0]]), Tensor([1.0]), Tensor([0.0]))


def test_layer_norm_gradients_match_finite_differences():
    x = Tensor(rand((3, 8), 8), requires_grad=True)
    g = Tensor(rand((8,), 9, std=0.5) + 1.0, requires_grad=True)
    b = Tensor(rand((8,), 10, std=0.5), requires_grad=True)
    weight = rand((3, 8), 11)

    def loss():
        return (layer_norm(x, g, b) * weight).sum()

    errs = check_gradients(loss, [("x", x), ("g", g), ("b", b)])
    assert max(errs.values()) < 1e-5


# -- elementwise / shape ops ---------------------------------------------------


@pytest.mark.parametrize("name,fn", [
    ("exp", texp),
    ("log", lambda t: tlog(t * t + 1.0)),
    ("tanh", ttanh),
    ("sqrt", lambda t: tsqrt(t * t + 0.5)),
    ("gelu", gelu),
    ("softplus", softplus),
    ("softmax", lambda t: softmax(t, axis=-1)),
    ("logsumexp", lambda t: logsumexp(t, axis=-1)),
    ("div", lambda t: div(1.0, t * t + 2.0)),
    ("clamp", lambda t: clamp_max(t, 0.4)),
    ("mean", lambda t: t.mean(axis=0, keepdims=True)),
    ("slice", lambda t: t[1:, 2:5] * 3.0),
    ("transpose", lambda t: transpose(t, (1, 0))),
    ("reshape", lambda t: reshape(t, (2, 12))),
    ("broadcast", lambda t: broadcast_to(reshape(t, (4, 1, 6)), (4, 5, 6))),
])
def test_elementwise_gradients(name, fn):
    x = Tensor(rand((4, 6), 20), requires_grad=True)
    out_shape = fn(Tensor(x.data)).shape
    weight = rand(out_shape, 21)

    def loss():
        return (fn(x) * weight).sum()

    errs = check_gradients(loss, [(name, x)])
    assert errs[name] < 1e-6, f"{name}: {errs[name]}"


def test_linear_gradients():
    from vld.tensor import linear
    x = Tensor(rand((3, 4, 6), 27), requires_grad=True)
    w = Tensor(rand((6, 5), 28), requires_grad=True)
    b = Tensor(rand((5,), 29), requires_grad=True)
    weight = rand((3, 4, 5), 30)

    def loss():
        return (linear(x, w, b) * weight).sum()

    errs = check_gradients(loss, [("x", x), ("w", w), ("b", b)])
    assert max(errs.values()) < 1e-6


def test_linear3_matches_three_linears_and_gradients():
    from vld.tensor import linear, linear3
    x = Tensor(rand((5, 6), 31), requires_grad=True)
    params = {name: Tensor(rand((6, 4) if name.startswith("w") else (4,),
                                32 + i), requires_grad=True)
              for i, name in enumerate(["wq", "bq", "wk", "bk", "wv", "bv"])}
    q, k, v = linear3(x, params["wq"], params["bq"], params["wk"],
                      params["bk"], params["wv"], params["bv"])
    for out, w_name, b_name in ((q, "wq", "bq"), (k, "wk", "bk"),
                                (v, "wv", "bv")):
        direct = linear(Tensor(x.data), params[w_name], params[b_name])
        np.testing.assert_allclose(out.data, direct.data, atol=1e-14)

    weights = [rand((5, 4), 40 + i) for i in range(3)]

    def loss():
        q, k, v = linear3(x, params["wq"], params["bq"], params["wk"],
                          params["bk"], params["wv"], params["bv"])
        return ((q * weights[0]).sum() + (k * weights[1]).sum()
                + (v * weights[2]).sum())

    errs = check_gradients(loss, [("x", x)] + list(params.items()))
    assert max(errs.values()) < 1e-6


def test_concat_gradients():
    a = Tensor(rand((3, 4), 22), requires_grad=True)
    b = Tensor(rand((3, 2), 23), requires_grad=True)
    weight = rand((3, 6), 24)

    def loss():
        return (concat([a, b], axis=1) * weight).sum()

    errs = check_gradients(loss, [("a", a), ("b", b)])
    assert max(errs.values()) < 1e-6


def test_transpose_reshape_round_trip_exact():
    x = rand((3, 4, 5), 25)
    t = Tensor(x)
    back = transpose(transpose(t, (2, 0, 1)), (1, 2, 0))
    np.testing.assert_array_equal(back.data, x)
    again = reshape(reshape(t, (12, 5)), (3, 4, 5))
    np.testing.assert_array_equal(again.data, x)


def test_swap_axes_round_trip():
    x = rand((2, 3, 4), 26)
    out = swap_axes(swap_axes(Tensor(x), 0, 2), 0, 2)
    np.testing.assert_array_equal(out.data, x)


# -- backward semantics ---------------------------------------------------------


def test_backward_sum_gives_ones():
    x = Tensor(rand((3, 4), 30), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_half_square_gives_x():
    x = Tensor(rand((5,), 31), requires_grad=True)
    ((x * x).sum() * 0.5).backward()
    np.testing.assert_allclose(x.grad, x.data, rtol=1e-12)


def test_backward_requires_scalar():
    x = Tensor(rand((3,), 32), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_backward_accumulates_without_reset():
    x = Tensor(rand((4,), 33), requires_grad=True)
    x.sum().backward()
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, 2.0 * np.ones(4))
    x.zero_grad()
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones(4))


def test_add_fanout_does_not_leak_between_parents():
    # add's vjp hands the same gradient array to both parents; a later
    # contribution into one parent must not corrupt the other.
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0, 4.0], requires_grad=True)
    z = a + b
    w = a * 3.0
    (z.sum() + w.sum()).backward()
    np.testing.assert_array_equal(a.grad, [4.0, 4.0])
    np.testing.assert_array_equal(b.grad, [1.0, 1.0])


def test_backward_fanout_accumulates():
    x = Tensor(rand((3,), 34), requires_grad=True)
    y = x * 2.0
    (y.sum() + (y * y).sum()).backward()
    np.testing.assert_allclose(x.grad, 2.0 + 8.0 * x.data, rtol=1e-12)


def test_no_grad_blocks_graph():
    x = Tensor(rand((3,), 35), requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad


def test_forward_backward_deterministic():
    def run():
        x = Tensor(Rng(5).normal((6, 6)), requires_grad=True)
        w = Tensor(Rng(6).normal((6, 6)), requires_grad=True)
        loss = (softmax(matmul(x, w)) * Tensor(Rng(7).normal((6, 6)))).sum()
        loss.backward()
        return loss.data.copy(), x.grad.copy(), w.grad.copy()

    first, second = run(), run()
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)


def test_tensor_invariants():
    x = Tensor(rand((3, 4), 36), requires_grad=True)
    assert int(np.prod(x.shape)) == x.size
    (x.sum()).backward()
    assert x.grad.shape == x.data.shape


def test_numeric_gradient_oracle_on_quadratic():
    # The oracle itself is sanity-checked against a hand-differentiable case.
    x = Tensor(np.array([1.5, -2.0, 0.5]))

    def f():
        return float((x.data ** 2).sum())

    np.testing.assert_allclose(numeric_gradient(f, x), 2 * x.data, atol=1e-8)
