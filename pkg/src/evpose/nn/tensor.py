"""A small reverse-mode autodiff engine over numpy arrays.

Every operation the models need is either a primitive here (with a hand
written vector-Jacobian product) or a composition of primitives elsewhere.
Graphs are built eagerly; backward() walks an iterative topological order,
so deep recurrent chains do not hit the recursion limit.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import NumericFault

_grad_enabled = True
_finite_checks = True


@contextmanager
def no_grad():
    """Disable graph construction (inference, buffer updates)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def set_finite_checks(on: bool) -> None:
    """Toggle NaN/Inf screening of op outputs (on by default)."""
    global _finite_checks
    _finite_checks = bool(on)


def _check_finite(data: np.ndarray, op: str) -> None:
    if _finite_checks and not np.all(np.isfinite(data)):
        raise NumericFault(f"non-finite values produced by '{op}'")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # split form never exponentiates a positive argument
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape the operand had before
    broadcasting."""
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
    """An array plus an optional backward closure into its parents."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    # -- construction of graph nodes -------------------------------------

    @staticmethod
    def _result(data, parents, vjp, op: str) -> "Tensor":
        _check_finite(data, op)
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        return out

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # -- backward ----------------------------------------------------------

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)

        # iterative post-order over the subgraph that requires grad
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
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        # leaves that were reached but had no vjp queued grads handled above

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other, self.dtype)
        out = self.data + other.data
        return Tensor._result(
            out, (self, other),
            lambda g: (_unbroadcast(g, self.shape),
                       _unbroadcast(g, other.shape)), "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = _wrap(other, self.dtype)
        out = self.data - other.data
        return Tensor._result(
            out, (self, other),
            lambda g: (_unbroadcast(g, self.shape),
                       _unbroadcast(-g, other.shape)), "sub")

    def __rsub__(self, other):
        return _wrap(other, self.dtype) - self

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other):
        other = _wrap(other, self.dtype)
        out = self.data * other.data
        return Tensor._result(
            out, (self, other),
            lambda g: (_unbroadcast(g * other.data, self.shape),
                       _unbroadcast(g * self.data, other.shape)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other, self.dtype)
        out = self.data / other.data
        return Tensor._result(
            out, (self, other),
            lambda g: (_unbroadcast(g / other.data, self.shape),
                       _unbroadcast(-g * self.data / (other.data ** 2),
                                    other.shape)), "div")

    def __rtruediv__(self, other):
        return _wrap(other, self.dtype) / self

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = self.data ** p
        return Tensor._result(
            out, (self,),
            lambda g: (g * p * self.data ** (p - 1),), "pow")

    def __matmul__(self, other):
        other = _wrap(other, self.dtype)
        out = self.data @ other.data

        def vjp(g):
            a, b = self.data, other.data
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

        return Tensor._result(out, (self, other), vjp, "matmul")

    # -- elementwise nonlinearities ------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor._result(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        return Tensor._result(np.log(self.data), (self,),
                              lambda g: (g / self.data,), "log")

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._result(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    def abs(self):
        return Tensor._result(np.abs(self.data), (self,),
                              lambda g: (g * np.sign(self.data),), "abs")

    def cos(self):
        return Tensor._result(np.cos(self.data), (self,),
                              lambda g: (-g * np.sin(self.data),), "cos")

    def sin(self):
        return Tensor._result(np.sin(self.data), (self,),
                              lambda g: (g * np.cos(self.data),), "sin")

    def sigmoid(self):
        out = _stable_sigmoid(self.data)
        return Tensor._result(out, (self,),
                              lambda g: (g * out * (1.0 - out),), "sigmoid")

    def silu(self):
        sig = _stable_sigmoid(self.data)
        out = self.data * sig
        return Tensor._result(
            out, (self,),
            lambda g: (g * sig * (1.0 + self.data * (1.0 - sig)),), "silu")

    def clip_min(self, floor: float):
        """max(x, floor); gradient passes where x >= floor."""
        out = np.maximum(self.data, floor)
        mask = (self.data >= floor).astype(self.data.dtype)
        return Tensor._result(out, (self,), lambda g: (g * mask,), "clip_min")

    def softmax(self, axis: int = -1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def vjp(g):
            dot = (g * out).sum(axis=axis, keepdims=True)
            return (out * (g - dot),)

        return Tensor._result(out, (self,), vjp, "softmax")

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            g = np.asarray(g)
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            axes = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                for ax in sorted(a % self.ndim for a in axes):
                    g = np.expand_dims(g, ax)
            return (np.broadcast_to(g, self.shape).copy(),)

        return Tensor._result(out, (self,), vjp, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- shape manipulation ------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self.data.reshape(shape)
        return Tensor._result(out, (self,),
                              lambda g: (g.reshape(self.shape),), "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        out = self.data.transpose(axes)
        return Tensor._result(out, (self,),
                              lambda g: (g.transpose(inv),), "transpose")

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def __getitem__(self, idx):
        out = self.data[idx]
        parts = idx if isinstance(idx, tuple) else (idx,)
        basic = all(isinstance(p, (int, np.integer, slice, type(None),
                                   type(Ellipsis))) for p in parts)

        def vjp(g):
            full = np.zeros(self.shape, dtype=g.dtype)
            if basic:  # no aliasing possible, plain assignment is exact
                full[idx] += g
            else:  # fancy indices may repeat: accumulate
                np.add.at(full, idx, g)
            return (full,)

        return Tensor._result(out, (self,), vjp, "getitem")


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._result(out, tuple(tensors), vjp, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        parts = np.split(g, len(tensors), axis=axis)
        return tuple(p.squeeze(axis) for p in parts)

    return Tensor._result(out, tuple(tensors), vjp, "stack")
