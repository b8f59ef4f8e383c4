"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation records its inputs and a backward rule on the returned
:class:`Tensor`.  Calling :func:`backward` on a scalar root walks the recorded
graph in reverse topological order and accumulates ``.grad`` on every tensor
that requires a gradient.

Broadcasting follows numpy semantics; gradients are summed back to the shape
of each input.
"""
from __future__ import annotations

import contextlib
from collections import OrderedDict
from typing import Callable, Iterable, Mapping

import numpy as np

from .exceptions import InputError, NumericError

__all__ = [
    "Tensor",
    "ParameterSet",
    "tensor",
    "constant",
    "backward",
    "evaluate_and_backward",
    "grad_check",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "tanh",
    "softplus",
    "square",
    "sqrt",
    "tsum",
    "mean",
    "matmul",
    "affine",
    "columns",
    "concat",
    "gather",
    "cumsum",
    "where",
    "maximum",
    "minimum",
    "reshape",
    "no_grad",
]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (values only)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, op="leaf", parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.value.shape})"

    def zero_grad(self):
        self.grad = None

    # operator sugar
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


def tensor(value, requires_grad=True) -> Tensor:
    return Tensor(value, requires_grad=requires_grad)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _node(value, op, parents, backward_fn):
    # a single reduction: any nan/inf element makes the sum non-finite
    if not np.isfinite(np.add.reduce(value, axis=None)):
        raise NumericError(f"non-finite value produced by op '{op}'")
    if not _GRAD_ENABLED or not any(p.requires_grad for p in parents):
        return Tensor(value, op=op)
    return Tensor(value, requires_grad=True, op=op, parents=parents, backward_fn=backward_fn)


# --- elementwise binary -----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.value + b.value, "add", (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.value - b.value, "sub", (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _node(a.value * b.value, "mul", (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.value / b.value

    def bw(g):
        gb = -g * out / b.value
        return _unbroadcast(g / b.value, a.shape), _unbroadcast(gb, b.shape)

    return _node(out, "div", (a, b), bw)


def maximum(a, c: float) -> Tensor:
    """Element-wise max with a constant."""
    a = as_tensor(a)
    mask = a.value > c
    return _node(np.where(mask, a.value, c), "maximum", (a,), lambda g: (g * mask,))


def minimum(a, c: float) -> Tensor:
    a = as_tensor(a)
    mask = a.value < c
    return _node(np.where(mask, a.value, c), "minimum", (a,), lambda g: (g * mask,))


# --- elementwise unary ------------------------------------------------------

def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.value, "neg", (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return _node(out, "exp", (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.value)
    return _node(out, "log", (a,), lambda g: (g / a.value,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _node(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    out = np.logaddexp(0.0, x)

    def bw(g):
        # logistic sigmoid, stable for both signs
        return (g * np.exp(x - out),)

    return _node(out, "softplus", (a,), bw)


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.value * a.value, "square", (a,), lambda g: (2.0 * g * a.value,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.value)
    return _node(out, "sqrt", (a,), lambda g: (0.5 * g / out,))


# --- reductions and shape ---------------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, "sum", (a,), bw)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.value.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.value.reshape(shape), "reshape", (a,), lambda g: (g.reshape(a.shape),))


def columns(a, index) -> Tensor:
    """Select columns of a 2-D tensor (an int, slice, or index list)."""
    a = as_tensor(a)
    if isinstance(index, int):
        index = [index]
    out = a.value[:, index]

    def bw(g):
        full = np.zeros_like(a.value)
        if isinstance(index, slice) or len(set(index)) == len(index):
            full[:, index] = g
        else:
            np.add.at(full, (slice(None), index), g)
        return (full,)

    return _node(out, "columns", (a,), bw)


def concat(parts: Iterable, axis=1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([p.value for p in parts], axis=axis), "concat", tuple(parts), bw)


def gather(a, index: np.ndarray) -> Tensor:
    """``take_along_axis`` on the last axis of a 2-D tensor; index is a constant int array."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    out = np.take_along_axis(a.value, index, axis=1)

    def bw(g):
        full = np.zeros_like(a.value)
        if index.shape[1] == 1:
            np.put_along_axis(full, index, g, axis=1)
        else:
            rows = np.arange(a.shape[0])[:, None]
            np.add.at(full, (np.broadcast_to(rows, index.shape), index), g)
        return (full,)

    return _node(out, "gather", (a,), bw)


def cumsum(a, axis=1) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _node(np.cumsum(a.value, axis=axis), "cumsum", (a,), bw)


def where(mask: np.ndarray, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)

    def bw(g):
        return (_unbroadcast(np.where(mask, g, 0.0), a.shape),
                _unbroadcast(np.where(mask, 0.0, g), b.shape))

    return _node(np.where(mask, a.value, b.value), "where", (a, b), bw)


# --- linear algebra ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return g @ b.value.T, a.value.T @ g

    return _node(a.value @ b.value, "matmul", (a, b), bw)


def affine(x, weight, bias) -> Tensor:
    """``x @ weight + bias`` for a batch ``x`` of shape (B, in)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)

    def bw(g):
        gx = g @ weight.value.T if x.requires_grad else None
        gw = x.value.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _node(x.value @ weight.value + bias.value, "affine", (x, weight, bias), bw)


# --- backward pass ----------------------------------------------------------

def _topological(root: Tensor):
    order, seen = [], set()
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


def backward(root: Tensor):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    if root.value.size != 1:
        raise InputError("backward() needs a scalar root")
    if not root.requires_grad:
        return
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(_topological(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


class ParameterSet:
    """Named trainable leaf tensors."""

    def __init__(self, params: Mapping[str, np.ndarray] | None = None):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value, trainable=True) -> Tensor:
        if name in self._params:
            raise InputError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=trainable)
        self._params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def trainable(self):
        return [(k, t) for k, t in self._params.items() if t.requires_grad]

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def gradients(self) -> dict:
        out = {}
        for name, t in self.trainable():
            out[name] = np.zeros_like(t.value) if t.grad is None else t.grad
        return out

    def values(self) -> dict:
        return {k: t.value.copy() for k, t in self._params.items()}

    def load(self, values: Mapping[str, np.ndarray]):
        for k, v in values.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self._params[k].value.shape:
                raise InputError(f"shape mismatch for {k!r}: {v.shape} vs {self._params[k].value.shape}")
            self._params[k].value = v.copy()

    def size(self) -> int:
        return int(sum(t.value.size for t in self._params.values()))


def evaluate_and_backward(root: Tensor, params: ParameterSet) -> dict:
    """Run the reverse pass from ``root`` and return gradients keyed by parameter name."""
    if root.value.size != 1:
        raise InputError("root must be scalar-valued")
    params.zero_grad()
    backward(root)
    return params.gradients()


def grad_check(f: Callable[[ParameterSet], Tensor], params: ParameterSet, epsilon=1e-5,
               names=None, max_coords=None, rng=None) -> float:
    """Largest coordinate-wise relative error between reverse-mode and central-difference gradients.

    ``f`` must rebuild its graph from the current parameter values on each call.
    ``max_coords`` limits the number of checked coordinates per parameter
    (chosen with ``rng``) for large tensors.
    """
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    grads = evaluate_and_backward(f(params), params)
    worst = 0.0
    for name, t in params.trainable():
        if names is not None and name not in names:
            continue
        flat = t.value.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng if rng is not None else np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        g = grads[name].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            up = float(f(params).value)
            flat[c] = orig - epsilon
            down = float(f(params).value)
            flat[c] = orig
            fd = (up - down) / (2 * epsilon)
            denom = max(abs(g[c]), abs(fd), 1e-8)
            worst = max(worst, abs(g[c] - fd) / denom)
    return worst
