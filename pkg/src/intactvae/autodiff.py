"""Minimal tape-free reverse-mode automatic differentiation over numpy arrays.

Every :class:`Tensor` produced by an operation keeps references to its
parents together with a vector-Jacobian product for each of them.  Calling
:func:`backward` on a scalar walks the graph in reverse topological order and
accumulates gradients into ``Tensor.grad``.

The free functions in this module (``exp``, ``log``, ``relu``...) accept plain
numpy arrays as well; when none of the inputs is a Tensor they return plain
arrays, so the same model code serves training and evaluation.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "backward", "grad", "value",
    "exp", "log", "sqrt", "square", "relu", "leaky_relu", "softplus",
    "sigmoid", "concat", "where", "sum", "mean",
]


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad=False, _parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return _make(self.value.T, [(self, lambda g: g.T)])

    def __repr__(self):
        return f"Tensor({self.value!r}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.value)

    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _neg(other))

    def __rsub__(self, other):
        return _add(other, _neg(self))

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return _neg(self)

    def __matmul__(self, other):
        return _matmul(self, other)

    def __rmatmul__(self, other):
        return _matmul(other, self)

    def __getitem__(self, idx):
        shape = self.value.shape

        basic = all(isinstance(i, (slice, int)) for i in (idx if isinstance(idx, tuple) else (idx,)))

        def vjp(g):
            out = np.zeros(shape)
            if basic:
                out[idx] = g
            else:
                np.add.at(out, idx, g)
            return out

        return _make(self.value[idx], [(self, vjp)])

    def reshape(self, *shape):
        old = self.value.shape
        return _make(self.value.reshape(*shape), [(self, lambda g: g.reshape(old))])

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def value(x):
    """Underlying numpy array of a Tensor or array-like."""
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _needs_grad(x):
    return isinstance(x, Tensor) and (x.requires_grad or bool(x._parents))


def _make(out, parents):
    """Wrap ``out`` as a graph node; drop the node if no parent needs grad."""
    live = tuple((p, f) for p, f in parents if _needs_grad(p))
    if not live and not any(isinstance(p, Tensor) for p, _ in parents):
        return out
    return Tensor(out, _parents=live)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _add(a, b):
    va, vb = value(a), value(b)
    return _make(va + vb, [(a, lambda g: _unbroadcast(g, va.shape)),
                           (b, lambda g: _unbroadcast(g, vb.shape))])


def _neg(a):
    if not isinstance(a, Tensor):
        return -np.asarray(a, dtype=np.float64)
    return _make(-a.value, [(a, lambda g: -g)])


def _mul(a, b):
    va, vb = value(a), value(b)
    return _make(va * vb, [(a, lambda g: _unbroadcast(g * vb, va.shape)),
                           (b, lambda g: _unbroadcast(g * va, vb.shape))])


def _div(a, b):
    va, vb = value(a), value(b)
    out = va / vb
    return _make(out, [(a, lambda g: _unbroadcast(g / vb, va.shape)),
                       (b, lambda g: _unbroadcast(-g * out / vb, vb.shape))])


def _matmul(a, b):
    va, vb = value(a), value(b)
    if va.ndim != 2 or vb.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {va.shape} @ {vb.shape}")
    return _make(va @ vb, [(a, lambda g: g @ vb.T), (b, lambda g: va.T @ g)])


def exp(x):
    out = np.exp(value(x))
    return _make(out, [(x, lambda g: g * out)])


def log(x):
    v = value(x)
    return _make(np.log(v), [(x, lambda g: g / v)])


def sqrt(x):
    out = np.sqrt(value(x))
    return _make(out, [(x, lambda g: g * 0.5 / out)])


def square(x):
    v = value(x)
    return _make(v * v, [(x, lambda g: 2.0 * g * v)])


def relu(x):
    v = value(x)
    mask = v > 0
    return _make(np.where(mask, v, 0.0), [(x, lambda g: g * mask)])


def leaky_relu(x, alpha=0.01):
    v = value(x)
    slope = np.where(v > 0, 1.0, alpha)
    return _make(v * slope, [(x, lambda g: g * slope)])


def softplus(x):
    v = value(x)
    out = np.logaddexp(0.0, v)
    return _make(out, [(x, lambda g: g * _sigmoid(v))])


def _sigmoid(v):
    # split by sign to avoid overflow in exp
    out = np.empty_like(v, dtype=np.float64)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    v = value(x)
    out = _sigmoid(np.atleast_1d(v)).reshape(np.shape(v))
    return _make(out, [(x, lambda g: g * out * (1.0 - out))])


def concat(xs, axis=-1):
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def piece(i):
        return lambda g: np.split(g, bounds, axis=axis)[i]

    return _make(out, [(x, piece(i)) for i, x in enumerate(xs)])


def where(cond, a, b):
    """Elementwise ``a`` where ``cond`` else ``b``; the unselected side gets no gradient."""
    cond = np.asarray(cond, dtype=bool)
    va, vb = value(a), value(b)
    return _make(np.where(cond, va, vb),
                 [(a, lambda g: _unbroadcast(np.where(cond, g, 0.0), va.shape)),
                  (b, lambda g: _unbroadcast(np.where(cond, 0.0, g), vb.shape))])


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    v = value(x)
    out = v.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, v.shape).copy()

    return _make(out, [(x, vjp)])


def mean(x, axis=None, keepdims=False):
    v = value(x)
    count = v.size if axis is None else np.prod([v.shape[a] for a in np.atleast_1d(axis)])
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it.

    Raises ``ValueError`` if ``loss`` is not a scalar.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("loss is not attached to any differentiable input")
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        for parent, vjp in node._parents:
            contrib = vjp(g)
            key = id(parent)
            grads[key] = contrib if key not in grads else grads[key] + contrib


def grad(loss, params):
    """Gradients of a scalar ``loss`` with respect to ``params`` (list of Tensors).

    Leaves that do not influence the loss get zero gradients.
    """
    for p in params:
        p.grad = None
    backward(loss)
    return [np.zeros_like(p.value) if p.grad is None else p.grad for p in params]
