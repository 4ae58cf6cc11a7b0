"""Finite-difference gradient checking.

Checks run the graph at 64-bit: 32-bit central differences are noisier than
the tolerances worth asserting. The straight-through binarize op fails this
check by construction (its backward is deliberately not the true Jacobian),
so it is excluded from blanket sweeps.
"""

import numpy as np

from .tensor import backward


def grad_check(f, params, h=1e-3):
    """Max relative error between analytic and central-difference gradients.

    f: callable taking the tensors in `params` and returning a scalar Tensor.
    Error per component is |analytic - fd| / max(1, |analytic|); the max over
    all components of all params is returned.
    """
    if h <= 0:
        raise ValueError("grad_check: h must be positive")
    loss = f(*params)
    if loss.data.size != 1:
        raise ValueError("grad_check: loss must be scalar")
    table = backward(loss, wrt=params)
    worst = 0.0
    for p in params:
        analytic = table[id(p)]
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + h
            fp = f(*params).item()
            p.data[idx] = orig - h
            fm = f(*params).item()
            p.data[idx] = orig
            fd = (fp - fm) / (2 * h)
            if not np.isfinite(fd) or not np.isfinite(analytic[idx]):
                raise FloatingPointError(f"grad_check: non-finite value at {p.name}{idx}")
            rel = abs(analytic[idx] - fd) / max(1.0, abs(analytic[idx]))
            worst = max(worst, rel)
    return worst
