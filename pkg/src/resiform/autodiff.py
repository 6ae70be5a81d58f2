"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Tape-free design: each Tensor produced by an operation keeps references to its
parents and a closure that maps the output adjoint to parent adjoints.
``backward()`` on a scalar replays those closures in reverse topological
order. Gradients accumulate into ``Tensor.grad``; a second ``backward()`` on
the same root without rebuilding the graph raises.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Sum out axes that numpy broadcasting introduced or stretched.
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._spent = False

    # -- graph plumbing -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar root")
        if self._spent:
            raise RuntimeError(
                "backward() called twice on the same graph; rebuild the graph "
                "or reset gradients first"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward_fn(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
        self._spent = True

    # -- operations ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = _node(self.data + other.data, (self, other))
        if out._backward_fn is not _NO_GRAD:
            def back(g):
                return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)
            out._backward_fn = back
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        out = _node(self.data - other.data, (self, other))
        if out._backward_fn is not _NO_GRAD:
            def back(g):
                return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)
            out._backward_fn = back
        return out

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        out = _node(self.data * other.data, (self, other))
        if out._backward_fn is not _NO_GRAD:
            def back(g):
                return (
                    _unbroadcast(g * other.data, self.shape),
                    _unbroadcast(g * self.data, other.shape),
                )
            out._backward_fn = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = _node(self.data / other.data, (self, other))
        if out._backward_fn is not _NO_GRAD:
            def back(g):
                ga = _unbroadcast(g / other.data, self.shape)
                gb = _unbroadcast(-g * self.data / other.data**2, other.shape)
                return ga, gb
            out._backward_fn = back
        return out

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out._backward_fn is not _NO_GRAD:
            out._backward_fn = lambda g: (-g,)
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul operands must have ndim >= 2")
        out = _node(self.data @ other.data, (self, other))
        if out._backward_fn is not _NO_GRAD:
            def back(g):
                ga = _unbroadcast(g @ np.swapaxes(other.data, -1, -2), self.shape)
                gb = _unbroadcast(np.swapaxes(self.data, -1, -2) @ g, other.shape)
                return ga, gb
            out._backward_fn = back
        return out

    def exp(self):
        val = np.exp(self.data)
        out = _node(val, (self,))
        if out._backward_fn is not _NO_GRAD:
            out._backward_fn = lambda g: (g * val,)
        return out

    def log(self):
        out = _node(np.log(self.data), (self,))
        if out._backward_fn is not _NO_GRAD:
            out._backward_fn = lambda g: (g / self.data,)
        return out

    def tanh(self):
        val = np.tanh(self.data)
        out = _node(val, (self,))
        if out._backward_fn is not _NO_GRAD:
            out._backward_fn = lambda g: (g * (1.0 - val**2),)
        return out

    def sigmoid(self):
        val = 1.0 / (1.0 + np.exp(-self.data))
        out = _node(val, (self,))
        if out._backward_fn is not _NO_GRAD:
            out._backward_fn = lambda g: (g * val * (1.0 - val),)
        return out

    def relu(self):
        out = _node(np.maximum(self.data, 0.0), (self,))
        if out._backward_fn is not _NO_GRAD:
            mask = self.data > 0.0
            out._backward_fn = lambda g: (g * mask,)
        return out

    def leaky_relu(self, slope: float = 0.01):
        # x for x >= 0, slope * x below.
        val = np.where(self.data >= 0.0, self.data, slope * self.data)
        out = _node(val, (self,))
        if out._backward_fn is not _NO_GRAD:
            factor = np.where(self.data >= 0.0, 1.0, slope)
            out._backward_fn = lambda g: (g * factor,)
        return out

    def square(self):
        out = _node(self.data**2, (self,))
        if out._backward_fn is not _NO_GRAD:
            out._backward_fn = lambda g: (2.0 * g * self.data,)
        return out

    def sum(self, axis=None, keepdims: bool = False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._backward_fn is not _NO_GRAD:
            shape = self.shape

            def back(g):
                if axis is None:
                    return (np.broadcast_to(g, shape).copy(),)
                if not keepdims:
                    g = np.expand_dims(g, axis)
                return (np.broadcast_to(g, shape).copy(),)
            out._backward_fn = back
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out._backward_fn is not _NO_GRAD:
            orig = self.shape
            out._backward_fn = lambda g: (g.reshape(orig),)
        return out

    def broadcast_to(self, shape):
        out = _node(np.broadcast_to(self.data, shape).copy(), (self,))
        if out._backward_fn is not _NO_GRAD:
            orig = self.shape
            out._backward_fn = lambda g: (_unbroadcast(g, orig),)
        return out

    def clip(self, lo: float, hi: float):
        out = _node(np.clip(self.data, lo, hi), (self,))
        if out._backward_fn is not _NO_GRAD:
            mask = (self.data >= lo) & (self.data <= hi)
            out._backward_fn = lambda g: (g * mask,)
        return out

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


# Sentinel assigned while grad is disabled so op code can tell the two regimes
# apart without re-checking the global flag.
_NO_GRAD = object()


def _node(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = None
    else:
        out._backward_fn = _NO_GRAD
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data, rng: np.random.Generator | None = None) -> Tensor:
    return Tensor(data, requires_grad=True)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out._backward_fn is not _NO_GRAD:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def back(g):
            return tuple(np.split(g, splits, axis=axis))
        out._backward_fn = back
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _node(np.minimum(a.data, b.data), (a, b))
    if out._backward_fn is not _NO_GRAD:
        take_a = a.data <= b.data  # ties route the adjoint to the first operand

        def back(g):
            return (
                _unbroadcast(g * take_a, a.shape),
                _unbroadcast(g * ~take_a, b.shape),
            )
        out._backward_fn = back
    return out
