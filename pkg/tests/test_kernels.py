import numpy as np
import pytest

from sdn.autodiff.kernels import conv_numba, conv_numpy


def conv2d_loop(x, k, stride, pad):
    """Quadruple-loop direct cross-correlation, float64. Independent oracle."""
    b, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.zeros((b, cin, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, :, pad : pad + h, pad : pad + w] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    y = np.zeros((b, cout, oh, ow), dtype=np.float64)
    for ib in range(b):
        for oc in range(cout):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ic in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[ib, ic, i * stride + u, j * stride + v] * k[oc, ic, u, v]
                    y[ib, oc, i, j] = acc
    return y


BACKENDS = [conv_numpy, conv_numba]
CASES = [
    (1, 1, 4, 4, 1, 3, 1, 0),
    (1, 1, 4, 4, 2, 3, 1, 1),
    (2, 3, 8, 8, 4, 3, 2, 1),
    (2, 4, 7, 7, 3, 3, 1, 1),  # small cout triggers the rowvec path
    (1, 2, 6, 6, 5, 5, 1, 2),
    (3, 3, 9, 9, 6, 3, 3, 0),
]


@pytest.mark.parametrize("mod", BACKENDS, ids=["numpy", "numba"])
@pytest.mark.parametrize("case", CASES)
def test_forward_matches_loop_oracle(mod, case):
    b, cin, h, w, cout, ks, stride, pad = case
    rng = np.random.default_rng(42)
    x = rng.standard_normal((b, cin, h, w)).astype(np.float32)
    k = rng.standard_normal((cout, cin, ks, ks)).astype(np.float32)
    got = mod.conv2d_forward(x, k, stride, pad)
    want = conv2d_loop(x, k, stride, pad)
    assert got.shape == want.shape
    np.testing.assert_allclose(got, want, atol=1e-5)


@pytest.mark.parametrize("mod", BACKENDS, ids=["numpy", "numba"])
def test_zero_input_gives_zero_output(mod):
    x = np.zeros((1, 2, 5, 5), np.float32)
    k = np.ones((3, 2, 3, 3), np.float32)
    assert not mod.conv2d_forward(x, k, 1, 1).any()


@pytest.mark.parametrize("mod", BACKENDS, ids=["numpy", "numba"])
def test_delta_kernel_is_identity(mod):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 1, 6, 6)).astype(np.float32)
    k = np.zeros((1, 1, 3, 3), np.float32)
    k[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(mod.conv2d_forward(x, k, 1, 1), x)


@pytest.mark.parametrize("mod", BACKENDS, ids=["numpy", "numba"])
@pytest.mark.parametrize("case", CASES)
def test_backward_matches_loop_oracle(mod, case):
    """Both gradients against finite differences of the loop oracle forward."""
    b, cin, h, w, cout, ks, stride, pad = case
    rng = np.random.default_rng(7)
    x = rng.standard_normal((b, cin, h, w))
    k = rng.standard_normal((cout, cin, ks, ks))
    gy = rng.standard_normal(mod.conv2d_forward(x, k, stride, pad).shape)

    gx = mod.conv2d_backward_input(gy, k, x.shape, stride, pad)
    gk = mod.conv2d_backward_kernel(gy, x, k.shape, stride, pad)

    def f(xx, kk):
        return float((conv2d_loop(xx, kk, stride, pad) * gy).sum())

    h_ = 1e-6
    for idx in [(0, 0, 0, 0), (b - 1, cin - 1, h - 1, w - 1), (0, cin // 2, h // 2, w // 2)]:
        xp = x.copy()
        xp[idx] += h_
        xm = x.copy()
        xm[idx] -= h_
        fd = (f(xp, k) - f(xm, k)) / (2 * h_)
        assert abs(gx[idx] - fd) < 1e-4
    for idx in [(0, 0, 0, 0), (cout - 1, cin - 1, ks - 1, ks - 1)]:
        kp = k.copy()
        kp[idx] += h_
        km = k.copy()
        km[idx] -= h_
        fd = (f(x, kp) - f(x, km)) / (2 * h_)
        assert abs(gk[idx] - fd) < 1e-4


@pytest.mark.parametrize("case", CASES)
def test_backends_agree(case):
    b, cin, h, w, cout, ks, stride, pad = case
    rng = np.random.default_rng(3)
    x = rng.standard_normal((b, cin, h, w)).astype(np.float32)
    k = rng.standard_normal((cout, cin, ks, ks)).astype(np.float32)
    ya = conv_numpy.conv2d_forward(x, k, stride, pad)
    yb = conv_numba.conv2d_forward(x, k, stride, pad)
    np.testing.assert_allclose(ya, yb, atol=1e-5)
    gy = rng.standard_normal(ya.shape).astype(np.float32)
    np.testing.assert_allclose(
        conv_numpy.conv2d_backward_input(gy, k, x.shape, stride, pad),
        conv_numba.conv2d_backward_input(gy, k, x.shape, stride, pad),
        atol=1e-4,
    )
    np.testing.assert_allclose(
        conv_numpy.conv2d_backward_kernel(gy, x, k.shape, stride, pad),
        conv_numba.conv2d_backward_kernel(gy, x, k.shape, stride, pad),
        atol=1e-4,
    )
