import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ts2rep import tensor_core as tc
from ts2rep.tensor_core import Tensor


def T64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def conv_oracle(x, k, d):
    """Direct sliding-window evaluation, x [C, T], k [O, C, 3]."""
    C, T = x.shape
    out = np.zeros((k.shape[0], T))
    for o in range(k.shape[0]):
        for t in range(T):
            acc = 0.0
            for c in range(C):
                for j in range(3):
                    s = t + (j - 1) * d
                    if 0 <= s < T:
                        acc += k[o, c, j] * x[c, s]
            out[o, t] = acc
    return out


# --- affine -----------------------------------------------------------------

def test_affine_offset_witness():
    out = tc.affine(T64([[1.0]]), T64([[1.0], [0.0]]), T64([0.0, 1.0]))
    np.testing.assert_array_equal(out.data, [[1.0, 1.0]])


def test_affine_zero_input():
    out = tc.affine(T64(np.zeros((3, 2))), T64(np.ones((4, 2))), T64(np.zeros(4)))
    np.testing.assert_array_equal(out.data, np.zeros((3, 4)))


def test_affine_hand_case():
    out = tc.affine(T64([[1.0, 2.0]]), T64([[1.0, 1.0], [2.0, 0.0]]), T64([1.0, 1.0]))
    np.testing.assert_array_equal(out.data, [[4.0, 3.0]])


def test_affine_shape_error_names_shapes():
    with pytest.raises(ValueError, match=r"\(1, 3\).*\(2, 2\)"):
        tc.affine(T64(np.ones((1, 3))), T64(np.ones((2, 2))), T64(np.zeros(2)))


# --- conv -------------------------------------------------------------------

def test_conv_ones_kernel():
    out = tc.conv1d_dilated(T64([[1.0, 2, 3, 4]]), T64(np.ones((1, 1, 3))), 1)
    np.testing.assert_array_equal(out.data, [[3.0, 6, 9, 7]])


def test_conv_dilation_two():
    out = tc.conv1d_dilated(T64([[1.0, 0, 0, 0, 1]]), T64(np.ones((1, 1, 3))), 2)
    np.testing.assert_array_equal(out.data, [[1.0, 0, 2, 0, 1]])


@pytest.mark.parametrize("d", [1, 2, 4, 9])
def test_conv_center_tap_is_identity(rng, d):
    x = rng.standard_normal((1, 7))
    out = tc.conv1d_dilated(T64(x), T64([[[0.0, 1.0, 0.0]]]), d)
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("d", [1, 2, 3, 8])
def test_conv_matches_direct_oracle(rng, d):
    x = rng.standard_normal((3, 11))
    k = rng.standard_normal((2, 3, 3))
    out = tc.conv1d_dilated(T64(x), T64(k), d)
    np.testing.assert_allclose(out.data, conv_oracle(x, k, d), atol=1e-12)


def test_conv_batched_channels_first_matches_per_item(rng):
    x = rng.standard_normal((3, 4, 9))  # [C, B, T]
    k = rng.standard_normal((5, 3, 3))
    out = tc.conv1d_dilated(T64(x), T64(k), 2)
    for b in range(4):
        np.testing.assert_allclose(out.data[:, b], conv_oracle(x[:, b], k, 2), atol=1e-12)


def test_conv_rejects_bad_dilation():
    with pytest.raises(ValueError):
        tc.conv1d_dilated(T64([[1.0]]), T64(np.ones((1, 1, 3))), 0)


@settings(max_examples=40, deadline=None)
@given(T=st.integers(1, 40), d=st.integers(1, 64))
def test_conv_preserves_length(T, d):
    out = tc.conv1d_dilated(T64(np.ones((2, T))), T64(np.ones((3, 2, 3))), d)
    assert out.shape == (3, T)


# --- gelu -------------------------------------------------------------------

def test_gelu_values():
    out = tc.gelu(T64([0.0, 1.0, 30.0]))
    assert out.data[0] == 0.0
    # 0.5 * (1 + erf(1 / sqrt 2)) from math.erf
    assert out.data[1] == pytest.approx(0.5 * (1 + math.erf(1 / math.sqrt(2))), abs=1e-15)
    assert out.data[1] == pytest.approx(0.841345, abs=1e-6)
    assert out.data[2] == pytest.approx(30.0)


# --- maxpool ----------------------------------------------------------------

@pytest.mark.parametrize("x,expected", [([3, 1, 2], [3, 2]), ([5], [5]), ([1, 4, 2, 2, 9], [4, 2, 9])])
def test_maxpool_examples(x, expected):
    np.testing.assert_array_equal(tc.maxpool1d_time(T64(x)).data, expected)


def test_maxpool_tie_routes_to_first():
    x = T64([2.0, 2.0, 1.0])
    tc.sum_(tc.maxpool1d_time(x)).backward()
    np.testing.assert_array_equal(x.grad, [1.0, 0.0, 1.0])


def test_maxpool_other_axis(rng):
    x = rng.standard_normal((2, 5, 3))
    out = tc.maxpool1d_time(T64(x), axis=1).data
    ref = np.stack([x[:, 0:2].max(1), x[:, 2:4].max(1), x[:, 4]], axis=1)
    np.testing.assert_array_equal(out, ref)


@settings(max_examples=50, deadline=None)
@given(T=st.integers(1, 200))
def test_maxpool_length_is_ceil_half(T):
    assert tc.maxpool1d_time(T64(np.zeros(T))).shape == (math.ceil(T / 2),)


# --- logsumexp --------------------------------------------------------------

def test_logsumexp_examples():
    assert tc.logsumexp(T64([0.0])).data == 0.0
    assert tc.logsumexp(T64([3.5, 3.5])).data == pytest.approx(3.5 + math.log(2), abs=1e-15)
    v = tc.logsumexp(T64([1000.0, 1000.0])).data
    assert np.isfinite(v) and v == pytest.approx(1000.6931471805599, abs=1e-9)


def test_logsumexp_empty_raises():
    with pytest.raises(ValueError):
        tc.logsumexp(T64(np.zeros(0)))


def test_logsumexp_ignores_neg_inf():
    assert tc.logsumexp(T64([0.0, -np.inf])).data == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-500, 500), min_size=1, max_size=20))
def test_logsumexp_shift_property(vals):
    v = np.array(vals)
    a = tc.logsumexp(T64(v)).data
    b = tc.logsumexp(T64(v - v.max())).data + v.max()
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


# --- gradients --------------------------------------------------------------

def test_grad_check_square():
    x = T64([3.0])
    assert tc.grad_check(lambda: tc.sum_(tc.mul(x, x)), [x], eps=1e-5) < 1e-6


def test_grad_check_reports_non_finite():
    x = T64([1.0])
    with pytest.raises(FloatingPointError):
        tc.grad_check(lambda: tc.sum_(tc.mul(x, np.inf)), [x])


@pytest.mark.parametrize("case", ["gelu", "affine", "conv", "conv_batched", "maxpool", "logsumexp",
                                  "matmul", "concat_slice"])
def test_op_gradients(rng, case):
    u = lambda *s: rng.uniform(-2, 2, size=s)  # noqa: E731
    w = u(*{"gelu": (6,), "affine": (4, 3), "conv": (3, 9), "conv_batched": (2, 3, 7),
            "maxpool": (2, 7), "logsumexp": (3, 5), "matmul": (2, 3, 4), "concat_slice": (2, 5)}[case])
    x = T64(w)
    probe = T64(u(*x.shape), grad=False)  # random projection turns outputs into a scalar
    if case == "gelu":
        f, ps = (lambda: tc.gelu(x)), [x]
    elif case == "affine":
        W, b = T64(u(2, 3)), T64(u(2))
        probe = T64(u(4, 2), grad=False)
        f, ps = (lambda: tc.affine(x, W, b)), [x, W, b]
    elif case in ("conv", "conv_batched"):
        k, bias = T64(u(2, x.shape[0], 3)), T64(u(2))
        probe = T64(u(2, *x.shape[1:]), grad=False)
        f, ps = (lambda: tc.conv1d_dilated(x, k, 2, bias)), [x, k, bias]
    elif case == "maxpool":
        probe = T64(u(2, 4), grad=False)
        f, ps = (lambda: tc.maxpool1d_time(x)), [x]
    elif case == "logsumexp":
        probe = T64(u(3), grad=False)
        f, ps = (lambda: tc.logsumexp(x, axis=1)), [x]
    elif case == "matmul":
        y = T64(u(2, 4, 3))
        probe = T64(u(2, 3, 3), grad=False)
        f, ps = (lambda: tc.matmul(x, y)), [x, y]
    else:
        y = T64(u(2, 3))
        probe = T64(u(2, 4), grad=False)
        f, ps = (lambda: tc.slice_axis(tc.concat([x, y], axis=1), 2, 6, axis=1)), [x, y]
    err = tc.grad_check(lambda: tc.sum_(tc.mul(f(), probe)), ps, eps=1e-6)
    assert err < 1e-4


def test_backward_accumulates(rng):
    x = T64(rng.standard_normal(5))
    f = lambda: tc.sum_(tc.gelu(x))  # noqa: E731
    f().backward()
    once = x.grad.copy()
    f().backward()
    np.testing.assert_allclose(x.grad, 2 * once, rtol=0, atol=0)


def test_backward_leaves_data_untouched(rng):
    x = T64(rng.standard_normal((2, 6)))
    before = x.data.copy()
    tc.sum_(tc.maxpool1d_time(tc.gelu(x))).backward()
    np.testing.assert_array_equal(x.data, before)
    assert x.grad.shape == x.data.shape
