import numpy as np
import pytest

from sdn.autodiff import Tensor, backward, no_grad, ops


def mlp_oracle(x, w1, b1, w2, b2):
    """Hand-rolled 2-layer MLP with explicit loops; no numpy matmul."""
    h = [[0.0] * len(w1) for _ in range(len(x))]
    for r, row in enumerate(x):
        for o in range(len(w1)):
            s = b1[o]
            for i, xi in enumerate(row):
                s += w1[o][i] * xi
            h[r][o] = max(s, 0.0)
    y = [[0.0] * len(w2) for _ in range(len(x))]
    for r, row in enumerate(h):
        for o in range(len(w2)):
            s = b2[o]
            for i, hi in enumerate(row):
                s += w2[o][i] * hi
            y[r][o] = s
    return np.array(y)


def test_linear_graph():
    x = Tensor([1.0, 2.0])
    y = x * 2.0
    np.testing.assert_array_equal(y.data, [2.0, 4.0])


def test_relu_forward():
    y = ops.relu(Tensor([-1.0, 3.0]))
    np.testing.assert_array_equal(y.data, [0.0, 3.0])


def test_mlp_matches_hand_rolled_oracle():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((4, 5)).astype(np.float32)
    w1 = rng.standard_normal((6, 5)).astype(np.float32)
    b1 = rng.standard_normal(6).astype(np.float32)
    w2 = rng.standard_normal((3, 6)).astype(np.float32)
    b2 = rng.standard_normal(3).astype(np.float32)
    h = ops.relu(ops.linear(Tensor(x), Tensor(w1), Tensor(b1)))
    y = ops.linear(h, Tensor(w2), Tensor(b2))
    want = mlp_oracle(x.tolist(), w1.tolist(), b1.tolist(), w2.tolist(), b2.tolist())
    np.testing.assert_allclose(y.data, want, atol=1e-6)


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    backward(x * x)
    assert x.grad == pytest.approx(6.0)


def test_backward_requires_scalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(x * 2.0)


def test_composite_conv_relu_linear_finite_differences():
    rng = np.random.default_rng(5)
    x = Tensor(rng.standard_normal((1, 2, 6, 6)), dtype=np.float64, requires_grad=True)
    k = Tensor(rng.standard_normal((3, 2, 3, 3)), dtype=np.float64, requires_grad=True)
    w = Tensor(rng.standard_normal((1, 27)), dtype=np.float64, requires_grad=True)

    def f():
        y = ops.relu(ops.conv2d(x, k, stride=2, pad=1))
        flat = ops.reshape(y, (1, 27))
        return ops.sum(ops.linear(flat, w))

    loss = f()
    table = backward(loss, wrt=[x, k, w])
    h = 1e-3
    for p in (x, k, w):
        analytic = table[id(p)]
        for idx in [(0,) * p.data.ndim, tuple(d - 1 for d in p.data.shape)]:
            orig = p.data[idx]
            p.data[idx] = orig + h
            fp = f().item()
            p.data[idx] = orig - h
            fm = f().item()
            p.data[idx] = orig
            fd = (fp - fm) / (2 * h)
            assert abs(analytic[idx] - fd) / max(1.0, abs(analytic[idx])) < 1e-4


def test_wrt_subset_never_touches_other_params():
    rng = np.random.default_rng(1)
    gen_w = Tensor(rng.standard_normal((4, 4)), requires_grad=True, name="gen.w")
    enc_w = Tensor(rng.standard_normal((4, 4)), requires_grad=True, name="enc.w")
    x = Tensor(rng.standard_normal((2, 4)))
    loss = ops.sum(ops.tanh(ops.matmul(ops.matmul(x, gen_w), enc_w)))
    table = backward(loss, wrt=[gen_w])
    assert set(table) == {id(gen_w)}
    assert enc_w.grad is None
    assert gen_w.grad is not None


def test_unreachable_wrt_param_gets_zeros():
    x = Tensor(2.0, requires_grad=True)
    unused = Tensor(np.ones(3), requires_grad=True)
    table = backward(x * x, wrt=[x, unused])
    np.testing.assert_array_equal(table[id(unused)], np.zeros(3))


def test_grad_accumulates_across_backward_calls():
    x = Tensor(3.0, requires_grad=True)
    backward(x * x)
    backward(x * x)
    assert x.grad == pytest.approx(12.0)


def test_no_grad_blocks_recording():
    x = Tensor(1.0, requires_grad=True)
    with no_grad():
        y = x * 5.0
    assert y._vjp is None and not y.requires_grad


def test_stop_gradient_blocks_flow():
    x = Tensor(2.0, requires_grad=True)
    y = ops.stop_gradient(x * 3.0) * x
    backward(y)
    assert x.grad == pytest.approx(6.0)  # only the direct factor


def test_shape_errors_name_the_op():
    with pytest.raises(ValueError, match="conv2d"):
        ops.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ValueError, match="matmul"):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    with pytest.raises(ValueError, match="larger than padded"):
        ops.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))))


def test_sorted_mean_is_order_invariant_bitwise():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((3, 8, 16)).astype(np.float32)
    base = ops.sorted_mean(Tensor(x), axis=1).data
    for _ in range(20):
        perm = rng.permutation(8)
        out = ops.sorted_mean(Tensor(x[:, perm]), axis=1).data
        np.testing.assert_array_equal(out, base)


def test_sorted_mean_gradient_is_uniform():
    x = Tensor(np.random.default_rng(0).standard_normal((2, 4, 3)), requires_grad=True)
    backward(ops.sum(ops.sorted_mean(x, axis=1)))
    np.testing.assert_allclose(x.grad, np.full((2, 4, 3), 0.25), atol=1e-7)
