"""Reverse-mode differentiation over float64 numpy arrays.

Operations are recorded only while a :class:`GradTape` is active on the
current thread, so rollouts run the same network code without building a
graph. Every op result is checked for finiteness at construction.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from lerl.errors import DomainError, NumericalError

_local = threading.local()


def _all_finite(arr: np.ndarray) -> bool:
    # a sum is non-finite iff some entry is (or the total overflows near float max)
    return math.isfinite(arr.sum())


def _active_tape() -> "GradTape | None":
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    """Immutable float64 array that can take part in a recorded graph."""

    __slots__ = ("data",)

    def __init__(self, data, *, _checked: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not _checked and not _all_finite(arr):
            raise NumericalError("tensor values must be finite")
        arr.setflags(write=False)
        self.data = arr

    @classmethod
    def _adopt(cls, arr: np.ndarray) -> "Tensor":
        # takes ownership of a freshly computed array, no copy
        t = object.__new__(cls)
        arr.setflags(write=False)
        t.data = arr
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel()

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise DomainError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self.data!r})"

    __array_priority__ = 100
    __array_ufunc__ = None  # make numpy defer to the reflected operators

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


class GradTape:
    """Records operations executed inside a ``with`` block.

    Not thread-safe; each thread uses its own tape.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "GradTape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def _record(self, out: Tensor, parents: tuple[Tensor, ...], vjp: Callable) -> None:
        self._nodes.append((out, parents, vjp))

    def gradient(self, target: Tensor, sources):
        """Gradients of scalar ``target`` w.r.t. ``sources``.

        ``sources`` may be a mapping (result is a dict with the same keys)
        or a sequence (result is a list). Sources the target does not
        depend on get zero gradients.
        """
        if target.data.size != 1:
            raise DomainError("gradient target must be a scalar")
        grads: dict[int, np.ndarray] = {id(target): np.ones_like(target.data)}
        for out, parents, vjp in reversed(self._nodes):
            g = grads.get(id(out))
            if g is None:
                continue
            for parent, pg in zip(parents, vjp(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        if isinstance(sources, Mapping):
            out = {name: _grad_for(grads, t) for name, t in sources.items()}
        else:
            out = [_grad_for(grads, t) for t in sources]
        return out


def _grad_for(grads: dict[int, np.ndarray], t: Tensor) -> np.ndarray:
    g = grads.get(id(t))
    if g is None:
        return np.zeros_like(t.data)
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    if not _all_finite(g):
        raise NumericalError("non-finite gradient")
    return g


def stop_gradient(x) -> Tensor:
    """Same values, no graph connection."""
    return Tensor(_data(x), _checked=True)


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    out_data = np.asarray(out_data, dtype=np.float64)
    if not _all_finite(out_data):
        raise NumericalError("operation produced a non-finite value")
    if not out_data.flags.owndata:
        out_data = out_data.copy()
    out = Tensor._adopt(out_data)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, parents, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product of operands with at least two dimensions.

    Leading (batch) dimensions broadcast as in ``numpy.matmul``.
    """
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DomainError("matmul operands need ndim >= 2; use dot for vectors")

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), vjp)


def dot(a, b) -> Tensor:
    """Inner product over the last axis."""
    return sum_(mul(a, b), axis=-1)


def tanh(a) -> Tensor:
    a = _wrap(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = _wrap(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = _wrap(a)
    if np.any(a.data <= 0.0):
        raise NumericalError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to ``[lo, hi]``; subgradient is 1 on the closed band, 0 outside."""
    a = _wrap(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = _wrap(a), _wrap(b)
    pick_a = a.data <= b.data
    return _make(
        np.where(pick_a, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
    )


def softmax(a, axis: int = -1, scale: float = 1.0) -> Tensor:
    """Softmax of ``scale * a`` along ``axis`` with max subtraction."""
    a = _wrap(a)
    z = scale * a.data
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (scale * s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (a,), vjp)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(y), (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def getitem(a, key) -> Tensor:
    a = _wrap(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return (out,)

    return _make(a.data[key], (a,), vjp)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = _wrap(a)
    return _make(
        np.swapaxes(a.data, ax1, ax2),
        (a,),
        lambda g: (np.swapaxes(g, ax1, ax2),),
    )


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _wrap(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (np.reshape(g, a.shape),))


def tensors(arrays: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    """Wrap a name->array mapping as leaf tensors."""
    return {name: Tensor(arr) for name, arr in arrays.items()}


def total(parts: Iterable[Tensor]) -> Tensor:
    out = None
    for p in parts:
        out = p if out is None else add(out, p)
    if out is None:
        raise DomainError("total of an empty sequence")
    return out
