"""A small reverse-mode autodiff engine over numpy arrays.

Each :class:`Tensor` remembers its parents and a closure mapping the
upstream gradient to one gradient per parent. Calling :meth:`Tensor.backward`
walks the graph in reverse topological order and accumulates ``.grad`` on
every leaf that requires it. Precision follows the data: float32 arrays stay
float32, float64 arrays stay float64.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _swap_last(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # ----------------------------------------------------------- plumbing
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _const(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"], backward: Callable) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
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
                grads[key] = pg if key not in grads else grads[key] + pg

    # -------------------------------------------------------- arithmetic
    def __add__(self, other) -> "Tensor":
        other = self._const(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._const(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other) -> "Tensor":
        return self._const(other) - self

    def __mul__(self, other) -> "Tensor":
        other = self._const(other)
        a, b = self.data, other.data
        need_a, need_b = self.requires_grad, other.requires_grad

        def backward(g):
            ga = _unbroadcast(g * b, a.shape) if need_a else None
            gb = _unbroadcast(g * a, b.shape) if need_b else None
            return ga, gb

        return Tensor._make(a * b, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._const(other)
        a, b = self.data, other.data
        return Tensor._make(
            a / b,
            (self, other),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)),
        )

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, p: float) -> "Tensor":
        a = self.data
        return Tensor._make(a**p, (self,), lambda g: (g * p * a ** (p - 1),))

    def square(self) -> "Tensor":
        a = self.data
        return Tensor._make(a * a, (self,), lambda g: (2 * g * a,))

    def abs(self) -> "Tensor":
        a = self.data
        return Tensor._make(np.abs(a), (self,), lambda g: (g * np.sign(a),))

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor._make(out, (self,), lambda g: (g * 0.5 / out,))

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,))

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), lambda g: (g * (1 - out * out),))

    def __matmul__(self, other) -> "Tensor":
        other = self._const(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")

        need_a, need_b = self.requires_grad, other.requires_grad

        def backward(g):
            ga = _unbroadcast(g @ _swap_last(b), a.shape) if need_a else None
            gb = _unbroadcast(_swap_last(a) @ g, b.shape) if need_b else None
            return ga, gb

        return Tensor._make(a @ b, (self, other), backward)

    def __rmatmul__(self, other) -> "Tensor":
        return self._const(other) @ self

    # ------------------------------------------------------------ shaping
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(axes)

    def __getitem__(self, idx) -> "Tensor":
        src_shape, dtype = self.shape, self.dtype
        advanced = isinstance(idx, (np.ndarray, list)) or (
            isinstance(idx, tuple) and any(isinstance(i, (np.ndarray, list)) for i in idx)
        )

        def backward(g):
            full = np.zeros(src_shape, dtype=dtype)
            if advanced:
                np.add.at(full, idx, g)
            else:
                full[idx] = g
            return (full,)

        return Tensor._make(self.data[idx], (self,), backward)

    def chunk(self, n: int, axis: int = -1) -> list["Tensor"]:
        size = self.shape[axis]
        if size % n:
            raise ValueError(f"axis of size {size} not divisible into {n} chunks")
        step = size // n
        axis = axis % self.ndim
        out = []
        for k in range(n):
            sl = [slice(None)] * self.ndim
            sl[axis] = slice(k * step, (k + 1) * step)
            out.append(self[tuple(sl)])
        return out

    # ---------------------------------------------------------- reductions
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            n = math.prod(self.shape[a] for a in axes)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # --------------------------------------------------------- activations
    def softmax(self, axis: int = -1) -> "Tensor":
        a = self.data
        shifted = np.exp(a - a.max(axis=axis, keepdims=True))
        out = shifted / shifted.sum(axis=axis, keepdims=True)

        def backward(g):
            return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

        return Tensor._make(out, (self,), backward)

    def layer_norm(self, eps: float = 1e-6) -> "Tensor":
        """Normalize over the last axis; no affine parameters."""
        a = self.data
        mu = a.mean(axis=-1, keepdims=True)
        xc = a - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv

        def backward(g):
            gm = g.mean(axis=-1, keepdims=True)
            gx = (g * xhat).mean(axis=-1, keepdims=True)
            return (inv * (g - gm - xhat * gx),)

        return Tensor._make(xhat, (self,), backward)

    def gelu(self) -> "Tensor":
        """GELU, tanh approximation."""
        a = self.data
        k = math.sqrt(2.0 / math.pi)
        inner = k * (a + 0.044715 * a**3)
        th = np.tanh(inner)
        out = 0.5 * a * (1 + th)

        def backward(g):
            dinner = k * (1 + 3 * 0.044715 * a * a)
            return (g * (0.5 * (1 + th) + 0.5 * a * (1 - th * th) * dinner),)

        return Tensor._make(out, (self,), backward)

    def silu(self) -> "Tensor":
        a = self.data
        sig = np.exp(-np.logaddexp(0, -a))
        out = a * sig
        return Tensor._make(out, (self,), lambda g: (g * sig * (1 + a * (1 - sig)),))


def take_rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """Gather ``table[idx]`` (embedding lookup) with scatter-add backward."""
    idx = np.asarray(idx, dtype=np.int64)
    shape, dtype = table.shape, table.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._make(table.data[idx], (table,), backward)


def row_matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` evaluated one row of ``a`` at a time.

    Every output row goes through an identical single-row product, so its
    bits depend only on that row and ``b``, never on the row's position.
    BLAS blocking does not give that guarantee for a full matrix product.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    bb = b.data if b.ndim == 2 else b.data[..., None, :, :]
    out = (a.data[..., None, :] @ bb)[..., 0, :]
    need_a, need_b = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ _swap_last(bd), ad.shape) if need_a else None
        gb = _unbroadcast(_swap_last(ad) @ g, bd.shape) if need_b else None
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)
