import itertools
import math

import numpy as np
import pytest

from latentreplay import kernels
from latentreplay.errors import ShapeError
from latentreplay.rng import SeededRng

from conftest import check_grad_tensor


def matmul_reference(a, b):
    """Triple-loop oracle."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out.astype(np.float32)


def conv2d_reference(x, kern, stride=1, pad=0, groups=1):
    """Direct six-loop convolution oracle."""
    n, c, h, w = x.shape
    f, c_g, kh, kw = kern.shape
    f_g = f // groups
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, f, ho, wo), dtype=np.float64)
    for b in range(n):
        for fi in range(f):
            g = fi // f_g
            for oi in range(ho):
                for oj in range(wo):
                    acc = 0.0
                    for ci in range(c_g):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += float(xp[b, g * c_g + ci,
                                                oi * stride + ki,
                                                oj * stride + kj]) \
                                       * float(kern[fi, ci, ki, kj])
                    out[b, fi, oi, oj] = acc
    return out.astype(np.float32)


# -- matmul -------------------------------------------------------------------


def test_matmul_identity():
    a = SeededRng(1).normal((2, 2))
    assert np.allclose(kernels.matmul(a, np.eye(2, dtype=np.float32)), a)


def test_matmul_zeros():
    b = SeededRng(2).normal((4, 2))
    out = kernels.matmul(np.zeros((3, 4), dtype=np.float32), b)
    assert out.shape == (3, 2)
    assert np.all(out == 0)


def test_matmul_worked_example():
    a = np.array([[1, 2], [3, 4]], dtype=np.float32)
    b = np.array([[5, 6], [7, 8]], dtype=np.float32)
    expected = matmul_reference(a, b)
    assert np.array_equal(expected, np.array([[19, 22], [43, 50]], dtype=np.float32))
    assert np.array_equal(kernels.matmul(a, b), expected)


def test_matmul_random_vs_oracle():
    rng = SeededRng(3)
    a, b = rng.normal((5, 7)), rng.normal((7, 4))
    assert np.allclose(kernels.matmul(a, b), matmul_reference(a, b), atol=1e-5)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        kernels.matmul(np.zeros((2, 3), dtype=np.float32),
                       np.zeros((4, 2), dtype=np.float32))


# -- conv2d -------------------------------------------------------------------


def test_conv_identity_1x1():
    x = SeededRng(4).normal((2, 1, 4, 4))
    k = np.ones((1, 1, 1, 1), dtype=np.float32)
    assert np.array_equal(kernels.conv2d(x, k), x)


def test_conv_constant_input_allones_kernel():
    c = 0.7
    x = np.full((1, 1, 5, 5), c, dtype=np.float32)
    k = np.ones((1, 1, 3, 3), dtype=np.float32)
    out = kernels.conv2d(x, k, stride=1, pad=0)
    assert np.allclose(out, 9 * c, atol=1e-6)


def test_conv_random_vs_oracle():
    rng = SeededRng(5)
    x = rng.normal((1, 2, 4, 4))
    k = rng.normal((3, 2, 3, 3))
    out = kernels.conv2d(x, k)
    assert out.shape == (1, 3, 2, 2)
    assert np.allclose(out, conv2d_reference(x, k), atol=1e-5)


def test_conv_exhaustive_small_shapes():
    rng = SeededRng(6)
    cases = itertools.product([1, 2], [1, 2, 4], [3, 6], [4, 6],
                              [1, 2, 3], [1, 2], [0, 1])
    for n, c, h, w, k, stride, pad in cases:
        if (h + 2 * pad - k) < 0 or (h + 2 * pad - k) % stride:
            continue
        if (w + 2 * pad - k) < 0 or (w + 2 * pad - k) % stride:
            continue
        x = rng.normal((n, c, h, w))
        kern = rng.normal((2, c, k, k))
        got = kernels.conv2d(x, kern, stride, pad)
        want = conv2d_reference(x, kern, stride, pad)
        assert np.abs(got - want).max() < 1e-5, (n, c, h, w, k, stride, pad)


def test_depthwise_matches_oracle():
    rng = SeededRng(7)
    x = rng.normal((2, 4, 6, 6))
    k = rng.normal((4, 1, 3, 3))
    got = kernels.conv2d(x, k, stride=1, pad=1, groups=4)
    want = conv2d_reference(x, k, stride=1, pad=1, groups=4)
    assert np.abs(got - want).max() < 1e-5


def test_grouped_conv_matches_oracle():
    rng = SeededRng(8)
    x = rng.normal((2, 4, 5, 5))
    k = rng.normal((6, 2, 3, 3))
    got = kernels.conv2d(x, k, groups=2)
    want = conv2d_reference(x, k, groups=2)
    assert np.abs(got - want).max() < 1e-5


def test_conv_nonintegral_extent_raises():
    x = np.zeros((1, 1, 5, 5), dtype=np.float32)
    k = np.zeros((1, 1, 2, 2), dtype=np.float32)
    with pytest.raises(ShapeError):
        kernels.conv2d(x, k, stride=2, pad=0)


def test_conv_group_mismatch_raises():
    x = np.zeros((1, 3, 4, 4), dtype=np.float32)
    k = np.zeros((2, 1, 3, 3), dtype=np.float32)
    with pytest.raises(ShapeError):
        kernels.conv2d(x, k, groups=2)


def test_conv_backward_matches_finite_differences(rng):
    r = SeededRng(9)
    x = r.normal((2, 2, 5, 5))
    k = r.normal((4, 2, 3, 3))
    dy = r.normal((2, 4, 3, 3))

    def loss():
        out = kernels.conv2d(x, k, stride=2, pad=1)
        return float((out.astype(np.float64) * dy).sum())

    dx, dk = kernels.conv2d_backward(x, k, dy, stride=2, pad=1)
    check_grad_tensor(loss, x, dx, rng, n_coords=12, label="conv dx")
    check_grad_tensor(loss, k, dk, rng, n_coords=12, label="conv dk")


def test_conv_outputs_bit_identical_across_calls():
    rng = SeededRng(10)
    x = rng.normal((2, 3, 6, 6))
    k = rng.normal((4, 3, 3, 3))
    a = kernels.conv2d(x, k, pad=1)
    b = kernels.conv2d(x, k, pad=1)
    assert a.tobytes() == b.tobytes()


def test_kernel_outputs_finite():
    rng = SeededRng(11)
    x = rng.normal((2, 3, 6, 6)) * 100
    k = rng.normal((4, 3, 3, 3)) * 100
    assert np.isfinite(kernels.conv2d(x, k, pad=1)).all()
    assert np.isfinite(kernels.matmul(x.reshape(2, -1), rng.normal((108, 4)))).all()


# -- pooling ------------------------------------------------------------------


def test_pool_constant():
    x = np.full((2, 3, 4, 4), 2.5, dtype=np.float32)
    assert np.allclose(kernels.global_avg_pool(x), 2.5)


def test_pool_worked_example():
    x = np.array([[[[1, 3], [5, 7]]]], dtype=np.float32)
    assert np.allclose(kernels.global_avg_pool(x), 4.0)


def test_pool_zeros():
    x = np.zeros((1, 2, 3, 3), dtype=np.float32)
    assert np.all(kernels.global_avg_pool(x) == 0)


def test_pool_backward_spreads_uniformly():
    dy = np.array([[1.0, 2.0]], dtype=np.float32)
    dx = kernels.global_avg_pool_backward(dy, 2, 2)
    assert dx.shape == (1, 2, 2, 2)
    assert np.allclose(dx[0, 0], 0.25)
    assert np.allclose(dx[0, 1], 0.5)


# -- softmax cross-entropy -----------------------------------------------------


def test_xent_uniform_logits():
    for c in (2, 5, 10):
        logits = np.zeros((3, c), dtype=np.float32)
        loss, _ = kernels.softmax_xent(logits, np.zeros(3, dtype=np.int64))
        assert abs(loss - math.log(c)) < 1e-12


def test_xent_uniform_gradient_two_classes():
    logits = np.zeros((2, 2), dtype=np.float32)
    _, d = kernels.softmax_xent(logits, np.array([0, 0]))
    assert np.allclose(d[0], [-0.25, 0.25])
    assert np.allclose(d[1], [-0.25, 0.25])


def test_xent_gradient_matches_finite_differences(rng):
    r = SeededRng(12)
    logits = r.normal((4, 6))
    labels = np.array([0, 2, 5, 3])

    def loss():
        return kernels.softmax_xent(logits, labels)[0]

    _, d = kernels.softmax_xent(logits, labels)
    check_grad_tensor(loss, logits, d, rng, n_coords=15, h=1e-3, label="dlogits")


def test_xent_label_out_of_range():
    logits = np.zeros((2, 3), dtype=np.float32)
    with pytest.raises(IndexError):
        kernels.softmax_xent(logits, np.array([0, 3]))


def test_xent_stable_for_large_logits():
    logits = np.array([[1000.0, 0.0], [-1000.0, 0.0]], dtype=np.float32)
    loss, d = kernels.softmax_xent(logits, np.array([0, 1]))
    assert np.isfinite(loss)
    assert np.isfinite(d).all()
