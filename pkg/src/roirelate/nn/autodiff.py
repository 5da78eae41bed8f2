"""Reverse-mode automatic differentiation on dense float64 arrays.

A Tensor wraps a numpy array and records, for every primitive operation,
vector-Jacobian closures pointing at its inputs. Calling backward() on a
scalar output topologically sorts the recorded graph and accumulates
gradients into every reachable node (additively, so repeated backward
calls without zeroing double the gradients).

Graph recording can be suspended with no_grad(), which makes forward
passes pure numpy evaluation.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf as _erf

_grad_enabled = True


@contextmanager
def no_grad():
    """Suspend graph recording inside the context (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast when producing it."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Autodiff node holding a float64 array and its accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_vjps")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Tensor entries must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._vjps = ()

    @classmethod
    def _node(cls, data: np.ndarray, vjps) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if _grad_enabled:
            live = [pair for pair in vjps if pair[0].requires_grad]
            out.requires_grad = bool(live)
            out._vjps = live
        else:
            out.requires_grad = False
            out._vjps = ()
        return out

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- gradient machinery ---------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(node) into .grad of every reachable node.

        self must be scalar. Gradients add onto whatever is already
        stored; call zero_grad on parameters between steps.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar output, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._vjps:
                if id(parent) not in seen:
                    stack.append((parent, False))

        acc: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = acc.get(id(node))
            if g is None:
                continue
            # Contributions may alias upstream gradients (views), so
            # accumulation always allocates instead of adding in place.
            for parent, vjp in node._vjps:
                contrib = vjp(g)
                prev = acc.get(id(parent))
                acc[id(parent)] = contrib if prev is None else prev + contrib
        for node in topo:
            if node._vjps:
                continue  # interior nodes do not keep gradients
            g = acc.get(id(node))
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad += g

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    # -- arithmetic primitives -------------------------------------------

    @staticmethod
    def _lift(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))

    @staticmethod
    def _sum_vjp(a: "Tensor"):
        """Gradient router for addition: identity unless broadcast happened."""
        shape = a.data.shape

        def vjp(g):
            return g if g.shape == shape else _unbroadcast(g, shape)

        return vjp

    def __add__(self, other):
        other = Tensor._lift(other)
        a, b = self, other
        return Tensor._node(
            a.data + b.data,
            ((a, Tensor._sum_vjp(a)), (b, Tensor._sum_vjp(b))),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._node(-self.data, ((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-Tensor._lift(other))

    def __rsub__(self, other):
        return Tensor._lift(other) + (-self)

    def __mul__(self, other):
        other = Tensor._lift(other)
        a, b = self, other

        def vjp_a(g):
            out = g * b.data
            return out if out.shape == a.data.shape else _unbroadcast(out, a.data.shape)

        def vjp_b(g):
            out = g * a.data
            return out if out.shape == b.data.shape else _unbroadcast(out, b.data.shape)

        return Tensor._node(a.data * b.data, ((a, vjp_a), (b, vjp_b)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other ** -1.0
        return self * (1.0 / other)

    def __pow__(self, exponent: float):
        a = self
        out = a.data ** exponent
        return Tensor._node(
            out, ((a, lambda g: g * exponent * a.data ** (exponent - 1.0)),)
        )

    def __matmul__(self, other):
        other = Tensor._lift(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
            raise ValueError(
                f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}"
            )
        return Tensor._node(
            a.data @ b.data,
            (
                (a, lambda g: g @ b.data.T),
                (b, lambda g: a.data.T @ g),
            ),
        )

    # -- elementwise functions ---------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor._node(out, ((self, lambda g: g * out),))

    def log(self):
        return Tensor._node(np.log(self.data), ((self, lambda g: g / self.data),))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._node(out, ((self, lambda g: g * (1.0 - out * out)),))

    def gelu(self):
        """Gaussian error linear unit, exact erf form."""
        x = self.data
        phi = 0.5 * (1.0 + _erf(x / math.sqrt(2.0)))
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        return Tensor._node(x * phi, ((self, lambda g: g * (phi + x * pdf)),))

    def smooth_l1(self):
        """Elementwise smooth-L1 (Huber) with transition at 1."""
        x = self.data
        ax = np.abs(x)
        out = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
        return Tensor._node(out, ((self, lambda g: g * np.clip(x, -1.0, 1.0)),))

    # -- reductions and shape ops --------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            if axis is None:
                gg = np.asarray(g).reshape((1,) * a.data.ndim)
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg, a.data.shape).copy()

        return Tensor._node(np.asarray(out), ((a, vjp),))

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    @property
    def T(self):
        if self.data.ndim != 2:
            raise ValueError("T is defined for 2-D tensors only")
        return Tensor._node(self.data.T, ((self, lambda g: g.T),))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor._node(
            a.data.reshape(shape), ((a, lambda g: g.reshape(a.data.shape)),)
        )

    def __getitem__(self, idx):
        a = self
        out = np.asarray(a.data[idx])
        basic = isinstance(idx, slice) or (
            isinstance(idx, tuple) and all(isinstance(s, slice) for s in idx)
        )

        def vjp(g):
            z = np.zeros_like(a.data)
            if basic:
                z[idx] += g  # slices never repeat an element
            else:
                np.add.at(z, idx, g)
            return z

        return Tensor._node(out, ((a, vjp),))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along an axis; gradient splits back."""
    tensors = [Tensor._lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    vjps = []
    offset = 0
    for t in tensors:
        width = t.data.shape[axis]
        sel = [slice(None)] * data.ndim
        sel[axis] = slice(offset, offset + width)
        sel = tuple(sel)
        vjps.append((t, lambda g, sel=sel: g[sel]))
        offset += width
    return Tensor._node(data, tuple(vjps))


def stop_gradient(t: Tensor) -> Tensor:
    """Treat t as a constant: forward value passes, no gradient flows."""
    return Tensor(t.data) if isinstance(t, Tensor) else Tensor(t)


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilized by row-max subtraction."""
    x = logits.data
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return out * (g - (g * out).sum(axis=1, keepdims=True))

    return Tensor._node(out, ((logits, vjp),))


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log-softmax of a 2-D tensor."""
    x = logits.data
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def vjp(g):
        return g - soft * g.sum(axis=1, keepdims=True)

    return Tensor._node(out, ((logits, vjp),))


class Parameter(Tensor):
    """Trainable leaf tensor with a persistent, zero-initialized gradient."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str = "", trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.grad = np.zeros_like(self.data)
        self.name = name
        self.trainable = trainable
