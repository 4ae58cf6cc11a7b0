"""Numba @njit conv kernels, NHWC inner layout.

The innermost loops run over the output-channel axis, which is contiguous in
the transposed buffers, so they SIMD-vectorize (fastmath only reassociates
within a fixed compiled binary, so results stay bitwise reproducible run to
run). Loop structure is chosen so every output element is written by exactly
one thread: prange is over independent slices only.

For layers facing few channels (the RGB ends of the ladders) NHWC inner
loops are too short to vectorize; stride-1 NCHW cores vectorize over the
output row instead.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=True, cache=True)
def _forward_core(xt, kt, stride, oh, ow):
    b = xt.shape[0]
    kh, kw, cin, cout = kt.shape
    y = np.zeros((b, oh, ow, cout), dtype=xt.dtype)
    for ib in prange(b):
        for i in range(oh):
            for j in range(ow):
                yrow = y[ib, i, j]
                for u in range(kh):
                    for v in range(kw):
                        xv = xt[ib, i * stride + u, j * stride + v]
                        for ic in range(cin):
                            s = xv[ic]
                            krow = kt[u, v, ic]
                            for oc in range(cout):
                                yrow[oc] += s * krow[oc]
    return y


@njit(parallel=True, fastmath=True, cache=True)
def _backward_input_core(gt, kt, hp, wp, stride):
    b, oh, ow, cout = gt.shape
    kh, kw, cin, _ = kt.shape
    gxt = np.zeros((b, hp, wp, cin), dtype=gt.dtype)
    for ib in prange(b):
        for i in range(oh):
            for j in range(ow):
                gv = gt[ib, i, j]
                for u in range(kh):
                    for v in range(kw):
                        row = gxt[ib, i * stride + u, j * stride + v]
                        for ic in range(cin):
                            krow = kt[u, v, ic]
                            s = 0.0
                            for oc in range(cout):
                                s += gv[oc] * krow[oc]
                            row[ic] += s
    return gxt


@njit(parallel=True, fastmath=True, cache=True)
def _backward_kernel_core(gt, xt, kh, kw, cin, stride):
    b, oh, ow, cout = gt.shape
    gk = np.zeros((kh, kw, cin, cout), dtype=gt.dtype)
    for uv in prange(kh * kw):
        u = uv // kw
        v = uv % kw
        for ib in range(b):
            for i in range(oh):
                for j in range(ow):
                    gv = gt[ib, i, j]
                    xv = xt[ib, i * stride + u, j * stride + v]
                    for ic in range(cin):
                        s = xv[ic]
                        grow = gk[u, v, ic]
                        for oc in range(cout):
                            grow[oc] += s * gv[oc]
    return gk


@njit(parallel=True, fastmath=True, cache=True)
def _forward_rowvec(xp, k, oh, ow):
    b = xp.shape[0]
    cout, cin, kh, kw = k.shape
    y = np.zeros((b, cout, oh, ow), dtype=xp.dtype)
    for ib in prange(b):
        for oc in range(cout):
            for i in range(oh):
                row = y[ib, oc, i]
                for ic in range(cin):
                    for u in range(kh):
                        xrow = xp[ib, ic, i + u]
                        for v in range(kw):
                            s = k[oc, ic, u, v]
                            for j in range(ow):
                                row[j] += s * xrow[j + v]
    return y


@njit(parallel=True, fastmath=True, cache=True)
def _backward_input_rowvec(gy, k, hp, wp):
    b, cout, oh, ow = gy.shape
    _, cin, kh, kw = k.shape
    gxp = np.zeros((b, cin, hp, wp), dtype=gy.dtype)
    for ib in prange(b):
        for ic in range(cin):
            for oc in range(cout):
                for i in range(oh):
                    grow = gy[ib, oc, i]
                    for u in range(kh):
                        xrow = gxp[ib, ic, i + u]
                        for v in range(kw):
                            s = k[oc, ic, u, v]
                            for j in range(ow):
                                xrow[j + v] += s * grow[j]
    return gxp


@njit(parallel=True, fastmath=True, cache=True)
def _backward_kernel_rowvec(gy, xp, cin, kh, kw):
    b, cout, oh, ow = gy.shape
    gk = np.zeros((cout, cin, kh, kw), dtype=gy.dtype)
    for oc in prange(cout):
        for ib in range(b):
            for i in range(oh):
                grow = gy[ib, oc, i]
                for ic in range(cin):
                    for u in range(kh):
                        xrow = xp[ib, ic, i + u]
                        for v in range(kw):
                            s = 0.0
                            for j in range(ow):
                                s += grow[j] * xrow[j + v]
                            gk[oc, ic, u, v] += s
    return gk


_ROWVEC_MAX_CH = 8  # NHWC inner loops win above this


def _to_nhwc_padded(x, pad):
    xt = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    if pad == 0:
        return xt
    return np.pad(xt, ((0, 0), (pad, pad), (pad, pad), (0, 0)))


def _pad_nchw(x, pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _kt(k):
    return np.ascontiguousarray(k.transpose(2, 3, 1, 0))  # (KH, KW, Cin, Cout)


class ConvPlan:
    """One conv instance; caches the transposed/padded buffers so the
    backward passes never redo the forward's layout work."""

    def __init__(self, x, k, stride, pad):
        self.x_shape = x.shape
        self.k_shape = k.shape
        self.stride = stride
        self.pad = pad
        _, _, h, w = x.shape
        cout, cin, kh, kw = k.shape
        self.oh = (h + 2 * pad - kh) // stride + 1
        self.ow = (w + 2 * pad - kw) // stride + 1
        self.rowvec_fwd = stride == 1 and cout <= _ROWVEC_MAX_CH
        self.rowvec_bwd_in = stride == 1 and cin <= _ROWVEC_MAX_CH
        self._x = x
        self._k = k
        self._xt = None  # NHWC padded
        self._xp = None  # NCHW padded
        self._ktr = None

    def xt(self):
        if self._xt is None:
            self._xt = _to_nhwc_padded(self._x, self.pad)
        return self._xt

    def xp(self):
        if self._xp is None:
            self._xp = _pad_nchw(self._x, self.pad)
        return self._xp

    def ktr(self):
        if self._ktr is None:
            self._ktr = _kt(self._k)
        return self._ktr

    def forward(self):
        if self.rowvec_fwd:
            return _forward_rowvec(self.xp(), np.ascontiguousarray(self._k), self.oh, self.ow)
        y = _forward_core(self.xt(), self.ktr(), self.stride, self.oh, self.ow)
        return np.ascontiguousarray(y.transpose(0, 3, 1, 2))

    def backward_input(self, gy):
        _, _, h, w = self.x_shape
        pad = self.pad
        if self.rowvec_bwd_in:
            gxp = _backward_input_rowvec(
                np.ascontiguousarray(gy), np.ascontiguousarray(self._k),
                h + 2 * pad, w + 2 * pad,
            )
            gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
            return np.ascontiguousarray(gx)
        gt = np.ascontiguousarray(gy.transpose(0, 2, 3, 1))
        gxt = _backward_input_core(gt, self.ktr(), h + 2 * pad, w + 2 * pad, self.stride)
        gx = gxt[:, pad : pad + h, pad : pad + w, :] if pad else gxt
        return np.ascontiguousarray(gx.transpose(0, 3, 1, 2))

    def backward_kernel(self, gy):
        cout, cin, kh, kw = self.k_shape
        if self.stride == 1 and cout <= _ROWVEC_MAX_CH:
            return _backward_kernel_rowvec(np.ascontiguousarray(gy), self.xp(), cin, kh, kw)
        gt = np.ascontiguousarray(gy.transpose(0, 2, 3, 1))
        gk = _backward_kernel_core(gt, self.xt(), kh, kw, cin, self.stride)
        return np.ascontiguousarray(gk.transpose(3, 2, 0, 1))


def make_plan(x, k, stride, pad):
    return ConvPlan(x, k, stride, pad)


def conv2d_forward(x, k, stride, pad):
    return ConvPlan(x, k, stride, pad).forward()


def conv2d_backward_input(gy, k, x_shape, stride, pad):
    plan = ConvPlan(np.zeros(x_shape, gy.dtype), k, stride, pad)
    return plan.backward_input(gy)


def conv2d_backward_kernel(gy, x, k_shape, stride, pad):
    plan = ConvPlan(x, np.zeros(k_shape, gy.dtype), stride, pad)
    return plan.backward_kernel(gy)
