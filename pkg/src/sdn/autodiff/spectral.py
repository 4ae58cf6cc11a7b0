"""Spectral normalization with a persistent power-iteration vector."""

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Tensor

_EPS = 1e-12


@dataclass
class SpectralNormState:
    u: np.ndarray  # left singular vector estimate, unit L2 norm


def init_spectral_state(out_dim, rng):
    u = rng.standard_normal(out_dim).astype(np.float32)
    return SpectralNormState(u=u / max(float(np.linalg.norm(u)), _EPS))


def spectral_normalize(weight, state, iters=1, update=True):
    """Divide a weight by its power-iteration top singular value.

    The weight is viewed as 2-D (out x flattened-in). u/v are treated as
    constants, so gradients flow through W / sigma(W) only. During training
    iters=1 with the persistent u; tests may pass many iterations for
    convergence. A numerically zero weight is returned unchanged.
    """
    w2 = weight.data.reshape(weight.data.shape[0], -1)
    u = state.u.astype(w2.dtype)
    v = None
    for _ in range(max(1, iters)):
        v = w2.T @ u
        nv = float(np.linalg.norm(v))
        if nv < _EPS:
            return weight  # zero weight: sigma clamped, nothing to scale
        v = v / nv
        u = w2 @ v
        nu = float(np.linalg.norm(u))
        if nu < _EPS:
            return weight
        u = u / nu
    if update:
        state.u = u.astype(np.float32)

    out, flat = w2.shape
    w_flat = ops.reshape(weight, (out, flat))
    sigma = ops.matmul(
        ops.matmul(Tensor(u.reshape(1, out)), w_flat), Tensor(v.reshape(flat, 1))
    )
    scaled = ops.div(w_flat, ops.reshape(sigma, (1, 1)))
    return ops.reshape(scaled, weight.data.shape)


def top_singular_value(w2, iters=50):
    """Power-method estimate on a plain 2-D array (no autodiff)."""
    rng = np.random.default_rng(0)
    u = rng.standard_normal(w2.shape[0]).astype(np.float64)
    u /= max(float(np.linalg.norm(u)), _EPS)
    m = w2.astype(np.float64)
    for _ in range(iters):
        v = m.T @ u
        nv = float(np.linalg.norm(v))
        if nv < _EPS:
            return 0.0
        v /= nv
        u = m @ v
        nu = float(np.linalg.norm(u))
        if nu < _EPS:
            return 0.0
        u /= nu
    return float(u @ m @ v)
