"""Dense float64 tensors with reverse-mode automatic differentiation.

Values are numpy arrays in row-major layout; shapes are plain tuples.
Every op builds a closure that knows how to push the output gradient
back to its parents, and backward() walks the graph in reverse
topological order. Gradients accumulate until explicitly zeroed.

The graph is only recorded when some input requires a gradient, so
forward passes through frozen (target) networks allocate no graph.
"""

import numpy as np

from conther import kern


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class GraphError(RuntimeError):
    """Misuse of the autodiff graph, e.g. backward from a non-scalar."""


class NumericsError(RuntimeError):
    """NaN or other numeric breakdown that aborts a run."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.grad = None
        t.requires_grad = False
        t._parents = ()
        t._backward = None
        return t

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; numbers are folded in directly instead of becoming nodes
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return add_const(self, float(other))
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add_const(self, -float(other))
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _result(data, parents, backward):
    """Wrap an op result, recording the graph only if a parent needs it."""
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    if any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = parents
        t._backward = backward
    else:
        t.requires_grad = False
        t._parents = ()
        t._backward = None
    return t


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(out):
    """Run reverse-mode differentiation from a scalar output.

    Every reachable tensor with requires_grad receives (accumulates) its
    gradient; calling backward again without zeroing adds on top.
    """
    if out.data.size != 1:
        raise GraphError(f"backward requires a scalar output, got shape {out.data.shape}")
    order = []
    visited = set()
    stack = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    _accum(out, np.ones_like(out.data))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


def add(a, b):
    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _result(a.data + b.data, (a, b), back)


def sub(a, b):
    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    return _result(a.data - b.data, (a, b), back)


def mul(a, b):
    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(a.data * b.data, (a, b), back)


def scale(a, c):
    def back(g):
        if a.requires_grad:
            _accum(a, g * c)

    return _result(a.data * c, (a,), back)


def add_const(a, c):
    def back(g):
        if a.requires_grad:
            _accum(a, g)

    return _result(a.data + c, (a,), back)


def matmul(a, b):
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} x {bd.shape}")

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(np.matmul(g, bd.swapaxes(-1, -2)), ad.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.matmul(ad.swapaxes(-1, -2), g), bd.shape))

    return _result(np.matmul(ad, bd), (a, b), back)


def reshape(a, shape):
    def back(g):
        if a.requires_grad:
            _accum(a, g.reshape(a.data.shape))

    return _result(a.data.reshape(shape), (a,), back)


def transpose(a, axes):
    inv = tuple(np.argsort(axes))

    def back(g):
        if a.requires_grad:
            _accum(a, g.transpose(inv))

    return _result(np.ascontiguousarray(a.data.transpose(axes)), (a,), back)


def getitem(a, idx):
    def back(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[idx] += g

    return _result(np.ascontiguousarray(a.data[idx]), (a,), back)


def concat(tensors, axis):
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def tsum(a, axis=None, keepdims=False):
    def back(g):
        if a.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad += g

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.data.shape[axis]

    def back(g):
        if a.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad += g / n

    return _result(a.data.mean(axis=axis, keepdims=keepdims), (a,), back)


def minimum(a, b):
    """Elementwise min; on ties the gradient goes to the first operand."""
    mask = a.data <= b.data

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * mask, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * ~mask, b.data.shape))

    return _result(np.minimum(a.data, b.data), (a, b), back)


def tanh(a):
    out_data = np.tanh(a.data)

    def back(g):
        if a.requires_grad:
            flat = kern.tanh_grad(out_data.reshape(-1), np.ascontiguousarray(g).reshape(-1))
            _accum(a, flat.reshape(a.data.shape))

    return _result(out_data, (a,), back)


def softplus(a):
    """Smooth rectifier log(1 + e^x), computed overflow-free."""
    flat_in = a.data.reshape(-1)

    def back(g):
        if a.requires_grad:
            flat = kern.softplus_grad(flat_in, np.ascontiguousarray(g).reshape(-1))
            _accum(a, flat.reshape(a.data.shape))

    return _result(kern.softplus(flat_in).reshape(a.data.shape), (a,), back)


def softmax(a, axis):
    """Max-subtracted softmax along one axis; slices sum to one."""
    nd = a.data.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"softmax: axis {axis} out of bounds for shape {a.data.shape}")
    axis = axis % nd
    moved = np.ascontiguousarray(np.moveaxis(a.data, axis, -1))
    rows = moved.reshape(-1, moved.shape[-1])
    s = kern.softmax_rows(rows)

    def back(g):
        if a.requires_grad:
            gm = np.ascontiguousarray(np.moveaxis(g, axis, -1)).reshape(rows.shape)
            gin = kern.softmax_rows_grad(s, gm).reshape(moved.shape)
            _accum(a, np.moveaxis(gin, -1, axis))

    out_data = np.moveaxis(s.reshape(moved.shape), -1, axis)
    return _result(np.ascontiguousarray(out_data), (a,), back)


LAYERNORM_EPS = 1e-5


def layer_norm(x, gain, bias, eps=LAYERNORM_EPS):
    """Normalize the last axis to zero mean / unit variance, then affine.

    The variance is floored at eps, so zero-variance rows normalize to
    zeros instead of dividing by zero.
    """
    n = x.data.shape[-1]
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain {gain.data.shape} / bias {bias.data.shape} "
            f"must match last axis ({n},)"
        )
    rows = np.ascontiguousarray(x.data).reshape(-1, n)
    out, xhat, rstd, clamped = kern.layernorm_rows(rows, gain.data, bias.data, eps)

    def back(g):
        g2 = np.ascontiguousarray(g).reshape(-1, n)
        gx, ggain, gbias = kern.layernorm_rows_grad(xhat, rstd, clamped, gain.data, g2)
        if x.requires_grad:
            _accum(x, gx.reshape(x.data.shape))
        if gain.requires_grad:
            _accum(gain, ggain)
        if bias.requires_grad:
            _accum(bias, gbias)

    return _result(out.reshape(x.data.shape), (x, gain, bias), back)
