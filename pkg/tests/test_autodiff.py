import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erf

from phaserx import autodiff as ad
from phaserx.autodiff import Tensor
from phaserx.groups import circulant_from_kernel, cyclic_shift


def T(x, **kw):
    return Tensor(np.asarray(x, dtype=np.float64), **kw)


# ---------------------------------------------------------------- init_tensor


def test_init_zeros():
    assert ad.init_tensor([3], "zeros", np.random.default_rng(0)).data.tolist() == [0, 0, 0]


def test_init_uniform_fanin_bound():
    t = ad.init_tensor([4, 4], "uniform_fanin", np.random.default_rng(7))
    assert np.all(np.abs(t.data) < 0.5)


def test_init_normal_scaled_moments():
    t = ad.init_tensor([100_000], "normal_scaled", np.random.default_rng(3), fan_in=8)
    assert abs(t.data.mean()) < 0.01
    assert abs(t.data.var() - 0.25) < 0.01


def test_init_rejects_zero_axis_and_unknown_scheme():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        ad.init_tensor([3, 0], "zeros", rng)
    with pytest.raises(ValueError):
        ad.init_tensor([], "zeros", rng)
    with pytest.raises(ValueError):
        ad.init_tensor([3], "uniform_fanin", rng)  # fan-in not derivable
    with pytest.raises(ValueError):
        ad.init_tensor([3, 3], "bogus", rng)


# ------------------------------------------------------------------ forward ops


def test_pointwise_linear_examples():
    assert ad.pointwise_linear(T([1, 2]), T(np.eye(2)), T([0, 0])).data.tolist() == [1, 2]
    out = ad.pointwise_linear(T([1, 2]), T([[1, 0], [1, 0]]), T([3, 0])).data
    assert out.tolist() == [6, 0]
    w = np.random.default_rng(0).standard_normal((2, 2))
    assert ad.pointwise_linear(T([0, 0]), T(w), T([5, -1])).data.tolist() == [5, -1]
    with pytest.raises(ValueError):
        ad.pointwise_linear(T([1, 2, 3]), T(np.eye(2)), T([0, 0]))


def test_depthwise_conv_examples(rng):
    x = rng.standard_normal((2, 5, 7, 3))
    delta = np.zeros((3, 3, 5))
    delta[:, 1, 2] = 1.0
    np.testing.assert_array_equal(ad.depthwise_conv_ft(T(x), T(delta)).data, x)
    row = T(np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1))
    out = ad.depthwise_conv_ft(row, T(np.ones((1, 1, 3))))
    assert out.data.reshape(-1).tolist() == [3, 6, 5]
    assert not ad.depthwise_conv_ft(T(x), T(np.zeros((3, 3, 5)))).data.any()
    with pytest.raises(ValueError):
        ad.depthwise_conv_ft(T(x), T(np.zeros((3, 2, 5))))


def test_depthwise_conv_dilation_matches_direct(rng):
    x = rng.standard_normal((5, 9, 2))
    k = rng.standard_normal((2, 3, 3))
    out = ad.depthwise_conv_ft(T(x), T(k), (2, 3)).data
    ref = np.zeros_like(x)
    for f in range(5):
        for t in range(9):
            for a in range(3):
                for b in range(3):
                    ff, tt = f + (a - 1) * 2, t + (b - 1) * 3
                    if 0 <= ff < 5 and 0 <= tt < 9:
                        ref[f, t] += k[:, a, b] * x[ff, tt]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def _group_axis(values, c=1):
    return T(np.asarray(values, dtype=float).reshape(-1, 1, 1, 1) * np.ones((1, 1, 1, c)))


def test_circular_group_conv_examples(rng):
    x = _group_axis([1, 2, 3, 4])
    assert ad.circular_group_conv(x, T([[1.0]])).data.reshape(-1).tolist() == [1, 2, 3, 4]
    assert ad.circular_group_conv(x, T([[0.0, 1.0]])).data.reshape(-1).tolist() == [4, 1, 2, 3]
    s = rng.standard_normal(5)
    psi = rng.standard_normal(5)
    out = ad.circular_group_conv(T(s.reshape(5, 1, 1, 1)), T(psi.reshape(1, 5))).data.reshape(-1)
    np.testing.assert_allclose(out, circulant_from_kernel(psi, 5) @ s, atol=1e-12)
    with pytest.raises(ValueError):
        ad.circular_group_conv(x, T(np.ones((1, 5))))


def test_layer_norm_examples():
    out = ad.layer_norm(T([1.0, 2.0, 3.0]), T(np.ones(3)), T(np.zeros(3)), eps=0.0).data
    np.testing.assert_allclose(out, [-1.2247448714, 0.0, 1.2247448714], atol=1e-9)
    const = ad.layer_norm(T(np.full((2, 4), 3.3)), T(np.ones(4)), T(np.zeros(4)), eps=1e-6).data
    assert np.all(const == 0)
    collapsed = ad.layer_norm(T([1.0, -4.0, 2.0]), T(np.zeros(3)), T(np.full(3, 5.0))).data
    assert collapsed.tolist() == [5, 5, 5]
    with pytest.raises(ValueError):
        ad.layer_norm(T(np.zeros((2, 0))), T(np.zeros(0)), T(np.zeros(0)))


def test_gelu_examples():
    assert ad.gelu(T([0.0])).data[0] == 0.0
    assert ad.gelu(T([1.0])).data[0] == pytest.approx(0.5 * (1 + erf(1 / math.sqrt(2))), abs=1e-12)
    assert ad.gelu(T([1.0])).data[0] == pytest.approx(0.841345, abs=1e-6)
    assert abs(ad.gelu(T([-10.0])).data[0]) < 1e-9


def test_gelu_float32_close_to_exact(rng):
    x = np.concatenate([rng.standard_normal(10_000) * 4, np.linspace(-12, 12, 1001)])
    exact = x * 0.5 * (1 + erf(x / math.sqrt(2)))
    out = ad.gelu(Tensor(x.astype(np.float32))).data
    np.testing.assert_allclose(out, exact, rtol=3e-6, atol=3e-7)


def test_mean_over_group_examples():
    c = ad.mean_over_group(T(np.full((3, 2, 2, 1), 1.5))).data
    assert np.all(c == 1.5)
    x = _group_axis([1, 2, 3, 4])
    for m in range(4):
        assert ad.mean_over_group(T(np.roll(x.data, m, 0))).data.item() == 2.5
    y = np.random.default_rng(0).standard_normal((1, 3, 4, 2))
    np.testing.assert_array_equal(ad.mean_over_group(T(y)).data, y[0])


def test_residual_add_examples(rng):
    x = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(ad.residual_add(T(x), T(np.zeros((2, 3)))).data, x)
    assert ad.residual_add(T([1, 2]), T([3, 4])).data.tolist() == [4, 6]
    assert not ad.residual_add(T(x), T(-x)).data.any()
    with pytest.raises(ValueError):
        ad.residual_add(T([1, 2]), T([1, 2, 3]))


def test_bce_examples():
    assert float(ad.bce_with_logits(T([0.0]), [1]).data) == pytest.approx(math.log(2), abs=1e-12)
    assert float(ad.bce_with_logits(T([2.0]), [0]).data) == pytest.approx(2.126928, abs=1e-6)
    v = float(ad.bce_with_logits(T([40.0]), [1]).data)
    assert 0 <= v < 1e-17
    with pytest.raises(ValueError):
        ad.bce_with_logits(T([0.0, 1.0]), [0, 2])
    with pytest.raises(ValueError):
        ad.bce_with_logits(T([0.0, 1.0]), [0])


@given(st.floats(-1e6, 1e6), st.integers(0, 1))
def test_bce_finite_nonnegative(z, y):
    v = float(ad.bce_with_logits(T([z]), [y]).data)
    assert math.isfinite(v) and v >= 0


def test_mixed_precision_rejected():
    with pytest.raises(TypeError):
        ad.pointwise_linear(Tensor(np.ones((1, 2), np.float32)), T(np.eye(2)), T([0, 0]))


# -------------------------------------------------------------------- backward


def test_backward_linear_and_quadratic():
    x = T([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.sum(x))
    assert x.grad.tolist() == [1, 1, 1]
    x = T([1.0, -2.0], requires_grad=True)
    ad.backward(ad.sum(ad.mul(x, x)))
    assert x.grad.tolist() == [2, -4]


def test_backward_rejects_non_scalar():
    x = T([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(ad.scale(x, 2.0))


def test_gradients_accumulate_into_shared_inputs():
    x = T([1.0, 2.0], requires_grad=True)
    y = ad.residual_add(ad.scale(x, 3.0), ad.mul(x, x))
    tape = ad.backward(ad.sum(y))
    np.testing.assert_array_equal(x.grad, 3 + 2 * x.data)
    assert len(tape.nodes) == len({id(n) for n in tape.nodes})


def test_disconnected_tensors_untouched():
    x = T([1.0], requires_grad=True)
    z = T([5.0], requires_grad=True)
    _ = ad.scale(z, 2.0)
    ad.backward(ad.sum(ad.scale(x, 2.0)))
    assert z.grad is None and x.grad.tolist() == [2]


def test_tape_is_topological():
    x = T([1.0, 2.0], requires_grad=True)
    a = ad.scale(x, 2.0)
    b = ad.mul(a, a)
    c = ad.residual_add(a, b)
    tape = ad.Tape.from_loss(ad.sum(c))
    pos = {id(n.output): i for i, n in enumerate(tape.nodes)}
    for n in tape.nodes:
        for inp in n.inputs:
            if inp._node is not None:
                assert pos[id(inp)] < pos[id(n.output)]


def test_no_grad_records_nothing():
    x = T([1.0], requires_grad=True)
    with ad.no_grad():
        y = ad.scale(x, 2.0)
    assert y._node is None and not y.requires_grad


def test_check_finite_raises():
    with ad.check_finite():
        with pytest.raises(FloatingPointError):
            ad.scale(T([np.inf]), 1.0)


# ----------------------------------------------------------- finite differences


def test_finite_diff_linear_4x4(rng):
    x, w, b = T(rng.standard_normal((3, 4))), T(rng.standard_normal((4, 4))), T(rng.standard_normal(4))
    r = rng.standard_normal((3, 4))
    rep = ad.finite_diff_check(lambda: ad.sum(ad.mul(ad.pointwise_linear(x, w, b), T(r))), [x, w, b], tol=1e-6)
    assert rep.passed, rep.max_rel_error


def test_finite_diff_group_conv_g5_k3(rng):
    x, k = T(rng.standard_normal((5, 2, 3, 4))), T(rng.standard_normal((4, 3)))
    r = rng.standard_normal(x.shape)
    rep = ad.finite_diff_check(lambda: ad.sum(ad.mul(ad.circular_group_conv(x, k), T(r))), [x, k], tol=1e-6)
    assert rep.passed, rep.max_rel_error


def test_finite_diff_layer_norm_near_constant(rng):
    x = T(2.0 + 1e-4 * rng.standard_normal((3, 6)))  # variance about 1e-8
    g, b = T(rng.standard_normal(6)), T(rng.standard_normal(6))
    r = rng.standard_normal(x.shape)
    rep = ad.finite_diff_check(lambda: ad.sum(ad.mul(ad.layer_norm(x, g, b, 1e-5), T(r))), [x, g, b], tol=1e-4)
    assert rep.passed, rep.max_rel_error


def test_finite_diff_requires_float64():
    x = Tensor(np.ones(2, np.float32))
    with pytest.raises(TypeError):
        ad.finite_diff_check(lambda: ad.sum(x), [x])


def test_finite_diff_detects_wrong_gradient(rng):
    x = T(rng.standard_normal(4))

    def bad_op(t):
        return ad._record("bad", t.data ** 2, (t,), lambda g: (g * t.data,))  # missing factor 2

    rep = ad.finite_diff_check(lambda: ad.sum(bad_op(x)), [x])
    assert not rep.passed


# ---------------------------------------------------------------- properties


@given(st.integers(1, 7), st.data())
def test_group_conv_shift_equivariance(g, data):
    kg = data.draw(st.integers(1, g))
    m = data.draw(st.integers(0, g - 1))
    seed = data.draw(st.integers(0, 2 ** 32 - 1))
    r = np.random.default_rng(seed)
    x = r.standard_normal((2, g, 3, 2, 4))
    k = T(r.standard_normal((4, kg)))
    lhs = ad.circular_group_conv(T(cyclic_shift(x, 1, m)), k).data
    rhs = cyclic_shift(ad.circular_group_conv(T(x), k).data, 1, m)
    assert np.abs(lhs - rhs).max() <= 1e-12
    x32 = x.astype(np.float32)
    k32 = Tensor(k.data.astype(np.float32))
    lhs = ad.circular_group_conv(Tensor(cyclic_shift(x32, 1, m)), k32).data
    rhs = cyclic_shift(ad.circular_group_conv(Tensor(x32), k32).data, 1, m)
    assert np.abs(lhs - rhs).max() <= 1e-5


@given(st.integers(1, 9), st.integers(0, 2 ** 32 - 1))
def test_group_conv_full_kernel_is_circulant(g, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((g, 1, 1, 2))
    psi = r.standard_normal((2, g))
    out = ad.circular_group_conv(T(x), T(psi)).data
    for c in range(2):
        np.testing.assert_allclose(out[:, 0, 0, c], circulant_from_kernel(psi[c], g) @ x[:, 0, 0, c], atol=1e-12)


@given(st.integers(1, 9), st.integers(0, 2 ** 32 - 1))
def test_mean_over_group_shift_invariant(g, seed):
    x = np.random.default_rng(seed).standard_normal((g, 2, 3, 2))
    base = ad.mean_over_group(T(x)).data
    for m in range(g):
        assert np.abs(ad.mean_over_group(T(np.roll(x, m, 0))).data - base).max() <= 1e-12


@given(st.lists(st.integers(1, 4), min_size=2, max_size=4), st.integers(1, 5))
def test_output_shapes_depend_only_on_input_shapes(shape, c_out):
    r = np.random.default_rng(0)
    x = T(r.standard_normal(shape))
    c = shape[-1]
    assert ad.pointwise_linear(x, T(r.standard_normal((c, c_out))), T(np.zeros(c_out))).shape == tuple(shape[:-1]) + (c_out,)
    assert ad.layer_norm(x, T(np.ones(c)), T(np.zeros(c))).shape == tuple(shape)
    assert ad.gelu(x).shape == tuple(shape)
    if len(shape) >= 3:
        assert ad.depthwise_conv_ft(x, T(np.ones((c, 3, 3)))).shape == tuple(shape)
    if len(shape) >= 4:
        assert ad.mean_over_group(x).shape == tuple(shape[:-4]) + tuple(shape[-3:])
