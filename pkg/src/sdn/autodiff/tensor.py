"""Reverse-mode autodiff over dense float tensors.

A Tensor wraps a numpy array. Ops (see ops.py) record their inputs and a
vector-Jacobian closure on the output tensor; `backward` replays the graph in
reverse topological order. Gradients are accumulated in a side table and only
written to `.grad` of the requested parameters, so frozen parameter groups
are never touched.

Training runs in float32; gradient checks build float64 graphs (the ops are
dtype-generic) because 32-bit finite differences are too noisy for tight
tolerances.
"""

import contextlib

import numpy as np

_FLOAT_DTYPES = (np.float32, np.float64)


class GradMode:
    enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    prev = GradMode.enabled
    GradMode.enabled = False
    try:
        yield
    finally:
        GradMode.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._vjp = None
        self._op = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, op={self._op}{tag})"

    # convenience operators; the actual vjps live in ops.py
    def __add__(self, other):
        from . import ops

        return ops.add(self, _lift(other, self.dtype))

    def __radd__(self, other):
        from . import ops

        return ops.add(_lift(other, self.dtype), self)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, _lift(other, self.dtype))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, _lift(other, self.dtype))

    def __rmul__(self, other):
        from . import ops

        return ops.mul(_lift(other, self.dtype), self)

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, _lift(other, self.dtype))

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def _lift(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def make_node(data, parents, vjp, op):
    """Build an op output; records the edge only if grads are on and needed."""
    out = Tensor(data)
    if GradMode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    return out


def topo_order(root):
    """Tensors reachable from root through recorded edges, parents first."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, wrt=None):
    """Populate gradients of a scalar loss for the tensors in `wrt`.

    wrt=None means every requires_grad leaf. Tensors outside wrt never get
    .grad written; wrt tensors unreachable from the loss get zeros. Returns
    a dict keyed by tensor identity -> gradient array (also accumulated into
    each tensor's .grad).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")

    order = topo_order(loss)
    wrt_ids = None if wrt is None else {id(t) for t in wrt}

    # gradient of a node is needed iff the node is a target or feeds one
    needed = {}
    for t in order:  # parents precede children
        if t._parents:
            flag = any(needed.get(id(p), False) for p in t._parents)
            if wrt_ids is not None and id(t) in wrt_ids:
                flag = True
        else:
            flag = t.requires_grad and (wrt_ids is None or id(t) in wrt_ids)
        needed[id(t)] = flag

    table = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        if t._vjp is None:
            continue  # leaf; its entry stays for the result pass
        g = table.get(id(t))
        if g is None:
            continue
        if wrt_ids is None or id(t) not in wrt_ids:
            del table[id(t)]  # keep entries for non-leaf wrt targets
        mask = tuple(needed.get(id(p), False) for p in t._parents)
        if not any(mask):
            continue
        parent_grads = t._vjp(g, mask)
        for p, pg, want in zip(t._parents, parent_grads, mask):
            if not want or pg is None:
                continue
            key = id(p)
            if key in table:
                table[key] = table[key] + pg
            else:
                table[key] = pg

    targets = wrt if wrt is not None else [t for t in order if not t._parents and t.requires_grad]
    result = {}
    for t in targets:
        g = table.get(id(t))
        if g is None:
            g = np.zeros_like(t.data)  # not reachable from the loss
        else:
            g = np.asarray(g, dtype=t.data.dtype)
            if g.shape != t.data.shape:
                g = np.broadcast_to(g, t.data.shape).copy()
        result[id(t)] = g
        t.grad = g if t.grad is None else t.grad + g
    return result


def grads_by_name(params, table):
    """Re-key a backward() result by parameter name."""
    return {t.name: table[id(t)] for t in params}
