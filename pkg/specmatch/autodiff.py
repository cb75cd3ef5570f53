"""A small reverse-mode differentiation engine over dense float64 matrices.

Every operation returns a :class:`DiffTensor`. When at least one input
requires a gradient the result carries a :class:`Node` recording its parents
and a closure mapping the output gradient to one gradient per parent.
:func:`backward` sorts the recorded graph topologically and sweeps it in
reverse, summing contributions across fan-out. Leaves that require
gradients (network parameters) accumulate into ``.grad`` until zeroed, so
several backward passes can be summed before one optimiser step.

Only the primitives the matching losses need are provided; anything else
(the functional map row solve, for instance) is built with
:func:`make_op`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch, TapeConsumed

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass(eq=False)
class Node:
    """Provenance of a computed tensor."""

    op: str
    parents: tuple["DiffTensor", ...]
    backward_fn: BackwardFn | None
    consumed: bool = False


class DiffTensor:
    __slots__ = ("value", "grad", "node", "requires_grad", "name")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False, node: Node | None = None, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.node = node
        self.requires_grad = bool(requires_grad or node is not None)
        self.name = name

    def __repr__(self) -> str:
        label = self.name or (self.node.op if self.node else "leaf")
        return f"DiffTensor({label}, shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def T(self) -> "DiffTensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def backward(self) -> None:
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, DiffTensor):
            return multiply(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def constant(value) -> DiffTensor:
    if isinstance(value, DiffTensor):
        return value
    return DiffTensor(value)


def parameter(value, name: str | None = None) -> DiffTensor:
    return DiffTensor(np.array(value, dtype=np.float64, copy=True), requires_grad=True, name=name)


def make_op(op: str, value: np.ndarray, parents: Sequence[DiffTensor], backward_fn: BackwardFn) -> DiffTensor:
    """Wrap ``value`` in a tensor; record a node only if some parent needs a gradient."""
    if any(p.requires_grad for p in parents):
        return DiffTensor(value, node=Node(op, tuple(parents), backward_fn))
    return DiffTensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> DiffTensor:
    a, b = constant(a), constant(b)
    value = a.value + b.value
    return make_op("add", value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> DiffTensor:
    a, b = constant(a), constant(b)
    value = a.value - b.value
    return make_op("sub", value, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def scale(a, factor: float) -> DiffTensor:
    a = constant(a)
    return make_op("scale", a.value * factor, (a,), lambda g: (g * factor,))


def multiply(a, b) -> DiffTensor:
    """Elementwise product with broadcasting."""
    a, b = constant(a), constant(b)
    return make_op(
        "multiply",
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def matmul(a, b) -> DiffTensor:
    a, b = constant(a), constant(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"matmul of {a.shape} and {b.shape}")

    def grad_fn(g):
        # skip the product for constant operands such as Phi^+
        return (
            g @ b.value.T if a.requires_grad else None,
            a.value.T @ g if b.requires_grad else None,
        )

    return make_op("matmul", a.value @ b.value, (a, b), grad_fn)


def transpose(a) -> DiffTensor:
    a = constant(a)
    return make_op("transpose", a.value.T.copy(), (a,), lambda g: (g.T,))


def total(a) -> DiffTensor:
    """Sum of all entries, as a scalar tensor."""
    a = constant(a)
    return make_op("sum", np.array(a.value.sum()), (a,), lambda g: (np.full(a.shape, float(g)),))


def frobenius_sq(a) -> DiffTensor:
    """``||a||_F^2``."""
    a = constant(a)
    return make_op("frobenius_sq", np.array(np.sum(a.value * a.value)), (a,), lambda g: (2.0 * float(g) * a.value,))


def exp(a) -> DiffTensor:
    a = constant(a)
    value = np.exp(a.value)
    return make_op("exp", value, (a,), lambda g: (g * value,))


def leaky_relu(a, slope: float = 0.01) -> DiffTensor:
    a = constant(a)
    positive = a.value > 0
    value = np.where(positive, a.value, slope * a.value)
    return make_op("leaky_relu", value, (a,), lambda g: (np.where(positive, g, slope * g),))


def softmax_rows(a) -> DiffTensor:
    """Row-wise softmax computed with the row maximum subtracted.

    The subtracted maximum is a constant for the backward pass: softmax is
    invariant to it, so its gradient contribution is zero.
    """
    a = constant(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    probs = weights / weights.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (probs * (g - np.sum(g * probs, axis=1, keepdims=True)),)

    return make_op("softmax_rows", probs, (a,), grad_fn)


def pad_columns(a, width: int) -> DiffTensor:
    """Right-pad with zero columns up to ``width`` (identity on existing columns)."""
    a = constant(a)
    rows, cols = a.shape
    if width < cols:
        raise DimensionMismatch(f"cannot pad {cols} columns down to {width}")
    if width == cols:
        return a
    value = np.hstack([a.value, np.zeros((rows, width - cols))])
    return make_op("pad_columns", value, (a,), lambda g: (g[:, :cols],))


def quadratic_form(matrix, y) -> DiffTensor:
    """``Trace(Y^T S Y)`` for a constant (sparse or dense) matrix ``S``."""
    y = constant(y)
    sy = matrix @ y.value
    value = np.array(np.sum(y.value * sy))
    transposed = matrix.T if sparse.issparse(matrix) else np.asarray(matrix).T

    def grad_fn(g):
        return (float(g) * (sy + transposed @ y.value),)

    return make_op("quadratic_form", value, (y,), grad_fn)


def spectral_diffuse(eigenvalues: np.ndarray, eigenfunctions: np.ndarray, pinv: np.ndarray, x, times) -> DiffTensor:
    """Per-channel heat diffusion ``Phi (exp(-lambda t_j) * Phi^+ x_j)``.

    Differentiable in both the signal ``x`` (n x c) and the times ``t`` (c,);
    the basis is a constant.
    """
    x, times = constant(x), constant(times)
    if x.shape[0] != eigenfunctions.shape[0]:
        raise DimensionMismatch(f"diffuse: signal has {x.shape[0]} rows, basis has {eigenfunctions.shape[0]}")
    if times.value.reshape(-1).shape[0] != x.shape[1]:
        raise DimensionMismatch(f"diffuse: {times.value.size} times for {x.shape[1]} channels")
    t = times.value.reshape(-1)
    coeffs = pinv @ x.value
    decay = np.exp(-np.outer(eigenvalues, t))
    value = eigenfunctions @ (decay * coeffs)

    def grad_fn(g):
        h = eigenfunctions.T @ g
        dx = pinv.T @ (decay * h)
        dt = -np.sum(eigenvalues[:, None] * decay * coeffs * h, axis=0)
        return dx, dt.reshape(times.shape)

    return make_op("spectral_diffuse", value, (x, times), grad_fn)


def _topological_order(root: DiffTensor) -> list[DiffTensor]:
    order: list[DiffTensor] = []
    seen: set[int] = set()
    stack: list[tuple[DiffTensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: DiffTensor) -> None:
    """Populate gradients of every tensor reachable from the scalar ``loss``."""
    if loss.value.size != 1:
        raise DimensionMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for tensor in order:
        if tensor.node is not None and tensor.node.consumed:
            raise TapeConsumed("graph already differentiated; run the forward pass again")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for tensor in reversed(order):
        g = pending.pop(id(tensor), None)
        if g is None:
            continue
        if tensor.node is None:
            tensor.grad = tensor.grad + g
            continue
        tensor.grad = g
        for parent, parent_grad in zip(tensor.node.parents, tensor.node.backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    for tensor in order:
        if tensor.node is not None:
            tensor.node.consumed = True
            tensor.node.backward_fn = None


def gradient_check(
    fn: Callable[[], DiffTensor],
    params: Iterable[DiffTensor],
    h: float = 1e-6,
) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    ``fn`` must rebuild the graph from ``params`` on every call. The error for
    a parameter is ``||g_ad - g_fd|| / max(||g_ad||, ||g_fd||)``.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(fn())
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, g_ad in zip(params, analytic):
        g_fd = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = fn().item()
            flat[i] = original - h
            down = fn().item()
            flat[i] = original
            g_fd.reshape(-1)[i] = (up - down) / (2 * h)
        scale_ = max(np.linalg.norm(g_ad), np.linalg.norm(g_fd))
        if scale_ > 0:
            worst = max(worst, float(np.linalg.norm(g_ad - g_fd) / scale_))
    for p in params:
        p.zero_grad()
    return worst
