"""Reverse-mode automatic differentiation on float64 numpy arrays.

The tape is implicit: every operation returns a :class:`Node` holding its
value, its parent nodes, and one vector-Jacobian callback per parent.
Calling :func:`backward` on a scalar output walks the graph once in reverse
topological order and accumulates gradients into ``.grad`` of every node
that requires them.

Values are numpy arrays (0-d for scalars), always float64.  Operations are
array-level rather than scalar-level, which keeps graphs for a typical
training step in the hundreds of nodes.  Nodes created from operands with
``requires=False`` everywhere collapse to constants, so mixing plain
ndarrays into expressions is free.

ReLU uses subgradient 0 at the kink.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class Node:
    """One value in the computation graph."""

    __slots__ = ("value", "parents", "vjps", "requires", "grad")

    # Keep numpy from consuming Nodes in mixed expressions; binary ops fall
    # back to the reflected methods below instead.
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjps=(), requires=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjps = vjps
        self.requires = requires
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        tag = "leaf" if (self.requires and not self.parents) else "node"
        return f"<{tag} shape={self.value.shape}>"


def leaf(value):
    """A differentiable input; ``.grad`` is populated by :func:`backward`."""
    return Node(value, requires=True)


def as_node(x):
    return x if isinstance(x, Node) else Node(x)


def _op(value, parents, vjps):
    if any(p.requires for p in parents):
        return Node(value, parents, vjps, requires=True)
    return Node(value)


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return np.reshape(g, shape)


def add(a, b):
    a, b = as_node(a), as_node(b)
    return _op(
        a.value + b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(g, b.value.shape),
        ),
    )


def sub(a, b):
    a, b = as_node(a), as_node(b)
    return _op(
        a.value - b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(-g, b.value.shape),
        ),
    )


def mul(a, b):
    a, b = as_node(a), as_node(b)
    return _op(
        a.value * b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.value, a.value.shape),
            lambda g: _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b):
    a, b = as_node(a), as_node(b)
    return _op(
        a.value / b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.value, a.value.shape),
            lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def neg(a):
    a = as_node(a)
    return _op(-a.value, (a,), (lambda g: -g,))


def exp(a):
    a = as_node(a)
    out = np.exp(a.value)
    return _op(out, (a,), (lambda g: g * out,))


def log(a):
    a = as_node(a)
    return _op(np.log(a.value), (a,), (lambda g: g / a.value,))


def sqrt(a):
    a = as_node(a)
    out = np.sqrt(a.value)
    return _op(out, (a,), (lambda g: 0.5 * g / out,))


def square(a):
    a = as_node(a)
    return _op(a.value * a.value, (a,), (lambda g: 2.0 * g * a.value,))


def relu(a):
    a = as_node(a)
    mask = a.value > 0.0
    return _op(np.where(mask, a.value, 0.0), (a,), (lambda g: g * mask,))


def vsum(a, axis=None, keepdims=False):
    a = as_node(a)
    val = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return np.broadcast_to(gg, a.value.shape)

    return _op(val, (a,), (vjp,))


def transpose(a):
    a = as_node(a)
    return _op(a.value.T, (a,), (lambda g: g.T,))


def reshape(a, shape):
    a = as_node(a)
    return _op(a.value.reshape(shape), (a,), (lambda g: g.reshape(a.value.shape),))


def take(a, key):
    """Basic indexing (ints and slices) with scatter-add backward."""
    a = as_node(a)

    def vjp(g):
        out = np.zeros_like(a.value)
        out[key] += g
        return out

    return _op(a.value[key], (a,), (vjp,))


def concat(parts, axis=0):
    nodes = [as_node(p) for p in parts]
    val = np.concatenate([n.value for n in nodes], axis=axis)
    sizes = [n.value.shape[axis] for n in nodes]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def make_vjp(i):
        sl = [slice(None)] * val.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return _op(val, tuple(nodes), tuple(make_vjp(i) for i in range(len(nodes))))


def matmul(a, b):
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 2:
        vjp_a = lambda g: g @ bv.T
        vjp_b = lambda g: av.T @ g
    elif av.ndim == 1 and bv.ndim == 2:
        vjp_a = lambda g: g @ bv.T
        vjp_b = lambda g: np.outer(av, g)
    elif av.ndim == 2 and bv.ndim == 1:
        vjp_a = lambda g: np.outer(g, bv)
        vjp_b = lambda g: av.T @ g
    elif av.ndim == 1 and bv.ndim == 1:
        vjp_a = lambda g: g * bv
        vjp_b = lambda g: g * av
    else:
        raise ValueError("matmul supports 1-d and 2-d operands only")
    return _op(av @ bv, (a, b), (vjp_a, vjp_b))


def solve_psd(a, b):
    """Solve ``A X = B`` for symmetric positive definite ``A`` via Cholesky.

    The factorization is computed once and reused by both vector-Jacobian
    callbacks (for ``B``: solve again; for ``A``: the standard
    ``-solve(A, gbar) @ X.T``).  Raises ``np.linalg.LinAlgError`` when the
    factorization fails; callers translate that into a domain error.
    """
    a, b = as_node(a), as_node(b)
    factor = scipy.linalg.cho_factor(a.value, lower=True)
    x = scipy.linalg.cho_solve(factor, b.value)

    def vjp_a(g):
        gb = scipy.linalg.cho_solve(factor, g)
        return -gb @ x.T

    def vjp_b(g):
        return scipy.linalg.cho_solve(factor, g)

    return _op(x, (a, b), (vjp_a, vjp_b))


def _topo_order(root):
    """Post-order over the sub-graph that requires gradients."""
    order = []
    seen = {id(root)}
    stack = [(root, iter(root.parents))]
    while stack:
        node, it = stack[-1]
        for p in it:
            if p.requires and id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p.parents)))
                break
        else:
            order.append(node)
            stack.pop()
    return order


def backward(out, seed=None):
    """Accumulate d(out)/d(node) into ``.grad`` over the whole graph.

    ``out`` is typically a 0-d node; ``seed`` overrides the initial
    gradient (defaults to ones).  Nodes not reachable from a leaf keep
    ``grad = None``.
    """
    if not isinstance(out, Node):
        raise TypeError("backward expects a Node")
    if not out.requires:
        raise ValueError("output does not depend on any differentiable leaf")
    order = _topo_order(out)
    for node in order:
        node.grad = None
    out.grad = (
        np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
    )
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            if not parent.requires:
                continue
            contrib = vjp(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
