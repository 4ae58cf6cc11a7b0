"""Adam optimizer over a named parameter group."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place.

    params: dict name -> Tensor; grads: dict name -> ndarray (missing names
    are skipped). Raises on non-finite gradients so instability halts the
    run instead of corrupting it.
    """
    state.t += 1
    t = state.t
    b1 = np.float32(state.beta1)
    b2 = np.float32(state.beta2)
    # decay constants from float64 so they agree with the bias corrections
    d1 = np.float32(1.0 - state.beta1)
    d2 = np.float32(1.0 - state.beta2)
    c1 = np.float32(1.0 - state.beta1**t)
    c2 = np.float32(1.0 - state.beta2**t)
    lr = np.float32(state.lr)
    eps = np.float32(state.eps)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"adam_step: non-finite gradient for {name!r}")
        g = g.astype(p.data.dtype, copy=False)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += d1 * g
        v *= b2
        v += d2 * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
