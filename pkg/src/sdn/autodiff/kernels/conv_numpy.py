"""Pure-numpy conv kernels: per-offset BLAS contractions in NHWC layout.

Reference backend; also the fallback when numba is unavailable or when
SDN_BACKEND=numpy is set. Public API is NCHW to match the engine; arrays are
transposed to channels-last internally so each kernel offset becomes one GEMM.
"""

import numpy as np


def _to_nhwc_padded(x, pad):
    xt = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    if pad == 0:
        return xt
    return np.pad(xt, ((0, 0), (pad, pad), (pad, pad), (0, 0)))


def conv2d_forward(x, k, stride, pad):
    b, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    xt = _to_nhwc_padded(x, pad)
    kt = np.ascontiguousarray(k.transpose(2, 3, 1, 0))  # (KH, KW, Cin, Cout)
    y = np.zeros((b, oh, ow, cout), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            xs = xt[:, u : u + oh * stride : stride, v : v + ow * stride : stride, :]
            y += xs.reshape(-1, cin) @ kt[u, v] if xs.flags.c_contiguous else xs @ kt[u, v]
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d_backward_input(gy, k, x_shape, stride, pad):
    b, cin, h, w = x_shape
    cout, _, kh, kw = k.shape
    _, _, oh, ow = gy.shape
    gt = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(b * oh * ow, cout)
    kt = k.transpose(2, 3, 1, 0)
    gxt = np.zeros((b, h + 2 * pad, w + 2 * pad, cin), dtype=gy.dtype)
    for u in range(kh):
        for v in range(kw):
            gxs = (gt @ kt[u, v].T).reshape(b, oh, ow, cin)
            # windows overlap for stride < kernel, so accumulate
            gxt[:, u : u + oh * stride : stride, v : v + ow * stride : stride, :] += gxs
    gx = gxt[:, pad : pad + h, pad : pad + w, :] if pad else gxt
    return np.ascontiguousarray(gx.transpose(0, 3, 1, 2))


def conv2d_backward_kernel(gy, x, k_shape, stride, pad):
    cout, cin, kh, kw = k_shape
    b, _, oh, ow = gy.shape
    xt = _to_nhwc_padded(x, pad)
    gt = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(b * oh * ow, cout)
    gk = np.zeros((kh, kw, cin, cout), dtype=gy.dtype)
    for u in range(kh):
        for v in range(kw):
            xs = xt[:, u : u + oh * stride : stride, v : v + ow * stride : stride, :]
            gk[u, v] = xs.reshape(-1, cin).T @ gt if xs.flags.c_contiguous else np.tensordot(
                xs, gt.reshape(b, oh, ow, cout), axes=([0, 1, 2], [0, 1, 2])
            )
    return np.ascontiguousarray(gk.transpose(3, 2, 0, 1))


class _Plan:
    """Same interface as the numba backend's ConvPlan."""

    def __init__(self, x, k, stride, pad):
        self._x = x
        self._k = k
        self.x_shape = x.shape
        self.k_shape = k.shape
        self.stride = stride
        self.pad = pad

    def forward(self):
        return conv2d_forward(self._x, self._k, self.stride, self.pad)

    def backward_input(self, gy):
        return conv2d_backward_input(gy, self._k, self.x_shape, self.stride, self.pad)

    def backward_kernel(self, gy):
        return conv2d_backward_kernel(gy, self._x, self.k_shape, self.stride, self.pad)


def make_plan(x, k, stride, pad):
    return _Plan(x, k, stride, pad)
