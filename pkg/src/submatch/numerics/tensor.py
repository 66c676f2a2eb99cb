"""Dense tensors with reverse-mode differentiation.

Every primitive computes its forward value with numpy and, when any input
requires a gradient, records a closure that pushes the output adjoint back
to its inputs. ``Tensor.backward`` replays those closures in reverse
topological order.
"""

from __future__ import annotations

import contextlib
import math
from typing import Iterable, Optional, Sequence, Union

import numpy as np

DTYPE = np.float64

_grad_enabled = True


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior node: free its adjoint once consumed
                    node.grad = None

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: scale(self, -1.0)
    __getitem__ = lambda self, idx: getitem(self, idx)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


ArrayLike = Union[Tensor, np.ndarray, float, int]


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check(values: np.ndarray, op: str) -> np.ndarray:
    # a finite sum proves every entry finite; only an overflowing sum needs the full scan
    if not math.isfinite(values.sum()) and not np.isfinite(values).all():
        raise NonFiniteError(f"non-finite value produced by {op}")
    return values


def _result(values: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(_check(values, op))
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(k for k, n in enumerate(shape) if n == 1 and g.shape[k] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data  # the finite check reports it

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * out / b.data, b.shape))

    return _result(out, (a, b), backward, "div")


def scale(a: ArrayLike, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _result(a.data * c, (a,), lambda g: a._accum(g * c), "scale")


def leaky_relu(a: ArrayLike, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return _result(a.data * factor, (a,), lambda g: a._accum(g * factor), "leaky_relu")


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return _result(out, (a,), lambda g: a._accum(g * out * (1.0 - out)), "sigmoid")


def absolute(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _result(np.abs(a.data), (a,), lambda g: a._accum(g * sign), "abs")


# ---------------------------------------------------------------------------
# shape
# ---------------------------------------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product with numpy's batch broadcasting (both operands >= 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,),
                   lambda g: a._accum(np.transpose(g, inverse)), "transpose")


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: a._accum(g.reshape(a.shape)), "reshape")


def concat(tensors: Iterable[ArrayLike], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, cuts, axis=axis)):
            t._accum(piece)

    return _result(np.concatenate([t.data for t in ts], axis=axis), ts, backward, "concat")


def getitem(a: ArrayLike, idx) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accum(full)

    return _result(a.data[idx], (a,), backward, "getitem")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _expand(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,),
                   lambda g: a._accum(_expand(g, a.shape, axis, keepdims)), "sum")


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[k] for k in np.atleast_1d(axis)])
    return _result(a.data.mean(axis=axis, keepdims=keepdims), (a,),
                   lambda g: a._accum(_expand(g, a.shape, axis, keepdims) / count), "mean")


def max(a: ArrayLike, axis: int = 0, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along one axis; the adjoint goes to the first maximal entry."""
    a = as_tensor(a)
    arg = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, arg, axis=axis)

    def backward(g):
        full = np.zeros_like(a.data)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, arg, gk, axis=axis)
        a._accum(full)

    return _result(out if keepdims else np.squeeze(out, axis), (a,), backward, "max")


# ---------------------------------------------------------------------------
# normalisation
# ---------------------------------------------------------------------------

def row_softmax_masked(logits: ArrayLike, mask: Optional[np.ndarray] = None,
                       temperature: Union[float, Tensor] = 1.0, empty_rows: str = "error") -> Tensor:
    """Softmax over the last axis restricted to ``mask``.

    Masked entries get probability exactly 0. Rows without any allowed entry
    raise unless ``empty_rows="zero"``, in which case they are all zero. A
    tensor ``temperature`` is differentiated through.
    """
    logits = as_tensor(logits)
    if isinstance(temperature, Tensor):
        logits = div(logits, temperature)
    else:
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        if temperature != 1.0:
            logits = scale(logits, 1.0 / temperature)
    x = logits.data
    if mask is None:
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=-1, keepdims=True)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        has_any = mask.any(axis=-1, keepdims=True)
        if empty_rows == "error" and not has_any.all():
            raise ValueError("softmax row with every entry masked")
        # the row max only looks at allowed entries
        m = np.where(mask, x, -np.inf).max(axis=-1, keepdims=True)
        m = np.where(has_any, m, 0.0)
        e = np.where(mask, np.exp(np.where(mask, x - m, 0.0)), 0.0)
        denom = e.sum(axis=-1, keepdims=True)
        p = e / np.where(has_any, denom, 1.0)

    def backward(g):
        logits._accum(p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _result(p, (logits,), backward, "row_softmax_masked")


def normalize_rows(a: ArrayLike) -> Tensor:
    """Scale rows (last axis) to unit L2 norm; all-zero rows stay zero."""
    a = as_tensor(a)
    norm = np.sqrt((a.data ** 2).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    u = a.data / safe

    def backward(g):
        proj = (g * u).sum(axis=-1, keepdims=True)
        a._accum(np.where(norm > 0, (g - u * proj) / safe, 0.0))

    return _result(u, (a,), backward, "normalize_rows")


def row_norm(a: ArrayLike) -> Tensor:
    """L2 norm of each row (last axis), kept as a column."""
    a = as_tensor(a)
    norm = np.sqrt((a.data ** 2).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    return _result(norm, (a,), lambda g: a._accum(np.where(norm > 0, g * a.data / safe, 0.0)), "row_norm")


def cosine_similarity_matrix(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Pairwise cosine similarity of the rows of ``a`` and ``b``; zero rows give 0."""
    return matmul(normalize_rows(a), transpose(normalize_rows(b)))


def mlp_apply(x: ArrayLike, layers: Sequence[tuple[Tensor, Optional[Tensor]]],
              slope: float = 0.2) -> Tensor:
    """Affine layers with LeakyReLU between them (none after the last)."""
    h = as_tensor(x)
    for k, (w, b) in enumerate(layers):
        h = matmul(h, w)
        if b is not None:
            h = add(h, b)
        if k < len(layers) - 1:
            h = leaky_relu(h, slope)
    return h
