"""Minimal reverse-mode automatic differentiation over numpy arrays.

The training objective is a small, fixed computation graph (a few hundred
nodes per batch), so a lean tape is all that is needed: each op returns a
``Tensor`` holding its value, its parents, and a closure that pushes the
output adjoint back into the parents. ``Tensor.backward()`` runs the closures
in reverse topological order.

Every functional op in this module also accepts plain ``numpy`` arrays and
then simply computes the forward value. That lets the model's forward
formulas be written once and reused verbatim for inference (arrays in, arrays
out) and for training (Tensors in, differentiable graph out).
"""

from __future__ import annotations

import numpy as np

from . import numerics

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "exp",
    "row_softmax",
    "logsumexp_rows",
    "diag_part",
    "l2_normalize_vec",
    "l2_normalize_rows",
    "row_l1_norms",
    "row_l2_norms",
    "scale_rows",
    "sum_all",
    "sum_axis1",
    "mean_axis0",
    "mean_all",
    "stack_rows",
]


class Tensor:
    """A node in the reverse-mode tape: value, accumulated adjoint, parents."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, value, parents=(), backprop=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backprop = backprop

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def item(self) -> float:
        return float(self.value)

    def backward(self) -> None:
        """Accumulate adjoints of a scalar output into every reachable parent."""
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar output")
        order = _toposort(self)
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backprop is not None:
                node._backprop()

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS: graphs can be deeper than the default recursion limit.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, children_done = stack.pop()
        if children_done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def parameter(value) -> Tensor:
    return Tensor(value, requires_grad=True)


def _is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the parent's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def matmul(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.matmul(a, b)
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value @ b.value, parents=(a, b))

    def backprop():
        g = out.grad
        av, bv = a.value, b.value
        # Promote 1-D operands so the transposed products line up.
        if av.ndim == 1 and bv.ndim == 1:
            ga, gb = g * bv, g * av
        elif av.ndim == 1:
            ga, gb = bv @ g, np.outer(av, g)
        elif bv.ndim == 1:
            ga, gb = np.outer(g, bv), av.T @ g
        else:
            ga, gb = g @ bv.T, av.T @ g
        if a.requires_grad:
            a.grad += ga
        if b.requires_grad:
            b.grad += gb

    out._backprop = backprop
    return out


def transpose(a):
    if not _is_tensor(a):
        return np.transpose(a)
    out = Tensor(a.value.T, parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad.T

    out._backprop = backprop
    return out


def add(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.add(a, b)
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value + b.value, parents=(a, b))

    def backprop():
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad, b.value.shape)

    out._backprop = backprop
    return out


def sub(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.subtract(a, b)
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value - b.value, parents=(a, b))

    def backprop():
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad, a.value.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(out.grad, b.value.shape)

    out._backprop = backprop
    return out


def mul(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.multiply(a, b)
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value * b.value, parents=(a, b))

    def backprop():
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad * b.value, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad * a.value, b.value.shape)

    out._backprop = backprop
    return out


def exp(a):
    if not _is_tensor(a):
        return np.exp(a)
    out = Tensor(np.exp(a.value), parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad * out.value

    out._backprop = backprop
    return out


def row_softmax(a):
    if not _is_tensor(a):
        return numerics.row_softmax(a)
    out = Tensor(numerics.row_softmax(a.value), parents=(a,))

    def backprop():
        if a.requires_grad:
            s, g = out.value, out.grad
            a.grad += s * (g - (g * s).sum(axis=1, keepdims=True))

    out._backprop = backprop
    return out


def logsumexp_rows(a):
    """Per-row log(sum(exp(row))), returned as a 1-D array of length n_rows."""
    if not _is_tensor(a):
        m = a.max(axis=1)
        return m + np.log(np.exp(a - m[:, None]).sum(axis=1))
    m = a.value.max(axis=1)
    e = np.exp(a.value - m[:, None])
    out = Tensor(m + np.log(e.sum(axis=1)), parents=(a,))

    def backprop():
        if a.requires_grad:
            soft = e / e.sum(axis=1, keepdims=True)
            a.grad += out.grad[:, None] * soft

    out._backprop = backprop
    return out


def diag_part(a):
    if not _is_tensor(a):
        return np.diagonal(a).copy()
    out = Tensor(np.diagonal(a.value).copy(), parents=(a,))

    def backprop():
        if a.requires_grad:
            n = out.value.shape[0]
            a.grad[np.arange(n), np.arange(n)] += out.grad

    out._backprop = backprop
    return out


def l2_normalize_vec(a):
    if not _is_tensor(a):
        return numerics.l2_normalize(a)
    norm = float(np.linalg.norm(a.value))
    unit = a.value / norm
    out = Tensor(unit, parents=(a,))

    def backprop():
        if a.requires_grad:
            g = out.grad
            a.grad += (g - unit * np.dot(unit, g)) / norm

    out._backprop = backprop
    return out


def l2_normalize_rows(a):
    if not _is_tensor(a):
        return numerics.l2_normalize_rows(a)
    norms = np.linalg.norm(a.value, axis=1, keepdims=True)
    unit = a.value / norms
    out = Tensor(unit, parents=(a,))

    def backprop():
        if a.requires_grad:
            g = out.grad
            a.grad += (g - unit * (unit * g).sum(axis=1, keepdims=True)) / norms

    out._backprop = backprop
    return out


def row_l1_norms(a):
    """Per-row sum of absolute values. Subgradient sign(x) away from zero."""
    if not _is_tensor(a):
        return np.abs(a).sum(axis=1)
    out = Tensor(np.abs(a.value).sum(axis=1), parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad[:, None] * np.sign(a.value)

    out._backprop = backprop
    return out


def row_l2_norms(a, eps: float = 1e-12):
    """Per-row sqrt(sum(x^2) + eps^2); the floor keeps the gradient finite at zero."""
    if not _is_tensor(a):
        return np.sqrt((np.asarray(a) ** 2).sum(axis=1) + eps * eps)
    norms = np.sqrt((a.value**2).sum(axis=1) + eps * eps)
    out = Tensor(norms, parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += (out.grad / norms)[:, None] * a.value

    out._backprop = backprop
    return out


def scale_rows(a, s):
    """Divide row i of ``a`` by scalar s[i]."""
    if not (_is_tensor(a) or _is_tensor(s)):
        return a / np.asarray(s)[:, None]
    a, s = _lift(a), _lift(s)
    out = Tensor(a.value / s.value[:, None], parents=(a, s))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad / s.value[:, None]
        if s.requires_grad:
            s.grad += -(out.grad * a.value).sum(axis=1) / (s.value**2)

    out._backprop = backprop
    return out


def sum_all(a):
    if not _is_tensor(a):
        return np.sum(a)
    out = Tensor(a.value.sum(), parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad

    out._backprop = backprop
    return out


def sum_axis1(a):
    if not _is_tensor(a):
        return np.sum(a, axis=1)
    out = Tensor(a.value.sum(axis=1), parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad[:, None]

    out._backprop = backprop
    return out


def mean_axis0(a):
    if not _is_tensor(a):
        return np.mean(a, axis=0)
    n = a.value.shape[0]
    out = Tensor(a.value.mean(axis=0), parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad[None, :] / n

    out._backprop = backprop
    return out


def mean_all(a):
    if not _is_tensor(a):
        return np.mean(a)
    n = a.value.size
    out = Tensor(a.value.mean(), parents=(a,))

    def backprop():
        if a.requires_grad:
            a.grad += out.grad / n

    out._backprop = backprop
    return out


def stack_rows(rows):
    """Stack 1-D values of equal length into a matrix, one per row."""
    if not any(_is_tensor(r) for r in rows):
        return np.stack(rows, axis=0)
    lifted = [_lift(r) for r in rows]
    out = Tensor(np.stack([r.value for r in lifted], axis=0), parents=tuple(lifted))

    def backprop():
        for i, r in enumerate(lifted):
            if r.requires_grad:
                r.grad += out.grad[i]

    out._backprop = backprop
    return out
