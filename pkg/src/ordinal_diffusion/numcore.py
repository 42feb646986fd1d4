"""Dense float64 tensors with a small reverse-mode autodiff engine.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. A :class:`Node`
wraps a tensor, records the operation that produced it and knows how to push
gradients back to its parents. Only the operations needed to train a small
MLP denoiser are provided.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


def as_tensor(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.size == 0:
        raise ShapeError("tensors must be nonempty")
    return arr


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{op} produced a non-finite result")
    return arr


class Node:
    """A value in the computation graph.

    ``grad`` has the same shape as ``value`` and starts at zero. Leaves keep
    accumulating into ``grad`` across calls to :func:`backward` until
    :meth:`zero_grad` is called.
    """

    __slots__ = ("value", "grad", "parents", "op", "requires_grad", "_backward")

    def __init__(self, value, parents: tuple = (), op: str = "leaf",
                 requires_grad: bool = True):
        self.value = value if isinstance(value, np.ndarray) and value.dtype == np.float64 \
            else as_tensor(value)
        self.grad = np.zeros_like(self.value)
        self.parents = parents
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Node:
    return Node(value, requires_grad=False)


def _lift(x, like: Node | None = None) -> Node:
    if isinstance(x, Node):
        return x
    if np.isscalar(x):
        return Node(np.float64(x) * np.ones(()), requires_grad=False)
    return constant(x)


def _accumulate(node: Node, g: np.ndarray, grads: dict) -> None:
    if not node.requires_grad:
        return
    key = id(node)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


def _unscalar(g: np.ndarray, shape: tuple) -> np.ndarray:
    # sum a gradient back down to a scalar operand
    if shape == () and g.shape != ():
        return np.asarray(g.sum())
    return g


def elementwise(op_kind: str, a, b) -> Node:
    a, b = _lift(a), _lift(b)
    sa, sb = a.value.shape, b.value.shape
    if sa != sb and sa != () and sb != ():
        raise ShapeError(f"{op_kind}: shapes {sa} and {sb} differ and neither is scalar")
    av, bv = a.value, b.value
    if op_kind == "add":
        val = av + bv
    elif op_kind == "sub":
        val = av - bv
    elif op_kind == "mul":
        val = av * bv
    elif op_kind == "div":
        with np.errstate(divide="ignore", invalid="ignore"):
            val = av / bv
    else:
        raise ValueError(f"unknown elementwise op {op_kind!r}")
    _check_finite(val, op_kind)
    out = Node(val, (a, b), op_kind)

    def backward(g, grads):
        if op_kind == "add":
            ga, gb = g, g
        elif op_kind == "sub":
            ga, gb = g, -g
        elif op_kind == "mul":
            ga, gb = g * bv, g * av
        else:
            ga, gb = g / bv, -g * av / (bv * bv)
        _accumulate(a, _unscalar(ga, sa), grads)
        _accumulate(b, _unscalar(gb, sb), grads)

    out._backward = backward
    return out


def add(a, b) -> Node:
    return elementwise("add", a, b)


def sub(a, b) -> Node:
    return elementwise("sub", a, b)


def mul(a, b) -> Node:
    return elementwise("mul", a, b)


def div(a, b) -> Node:
    return elementwise("div", a, b)


def matmul(a: Node, b: Node) -> Node:
    a, b = _lift(a), _lift(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.value.shape} by {b.value.shape}")
    av, bv = a.value, b.value
    out = Node(av @ bv, (a, b), "matmul")

    def backward(g, grads):
        if a.requires_grad:
            _accumulate(a, g @ bv.T, grads)
        if b.requires_grad:
            _accumulate(b, av.T @ g, grads)

    out._backward = backward
    return out


def add_bias(a: Node, bias: Node) -> Node:
    """Add a length-n row vector to every row of an m x n matrix."""
    a, bias = _lift(a), _lift(bias)
    if a.value.ndim != 2 or bias.value.shape != (a.value.shape[1],):
        raise ShapeError(f"add_bias: bias {bias.value.shape} does not fit {a.value.shape}")
    out = Node(a.value + bias.value, (a, bias), "add_bias")

    def backward(g, grads):
        _accumulate(a, g, grads)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=0), grads)

    out._backward = backward
    return out


def reduce_mean(a: Node) -> Node:
    a = _lift(a)
    n = a.value.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    out = Node(np.asarray(a.value.sum() / n), (a,), "mean")
    shape = a.value.shape

    def backward(g, grads):
        _accumulate(a, np.full(shape, g / n), grads)

    out._backward = backward
    return out


def reduce_sum(a: Node) -> Node:
    a = _lift(a)
    out = Node(np.asarray(a.value.sum()), (a,), "sum")
    shape = a.value.shape

    def backward(g, grads):
        _accumulate(a, np.full(shape, g), grads)

    out._backward = backward
    return out


def row_mean(a: Node) -> Node:
    """Mean over the columns of an m x n matrix, giving a length-m vector."""
    a = _lift(a)
    if a.value.ndim != 2:
        raise ShapeError("row_mean expects a matrix")
    n = a.value.shape[1]
    out = Node(a.value.mean(axis=1), (a,), "row_mean")

    def backward(g, grads):
        _accumulate(a, np.repeat((g / n)[:, None], n, axis=1), grads)

    out._backward = backward
    return out


def square(a: Node) -> Node:
    a = _lift(a)
    av = a.value
    out = Node(av * av, (a,), "square")

    def backward(g, grads):
        _accumulate(a, 2.0 * av * g, grads)

    out._backward = backward
    return out


def sqrt(a: Node) -> Node:
    """Square root; the gradient at exactly 0 is taken as 0 (one-sided subgradient)."""
    a = _lift(a)
    if np.any(a.value < 0):
        raise NumericalError("sqrt of a negative value")
    val = np.sqrt(a.value)
    out = Node(val, (a,), "sqrt")

    def backward(g, grads):
        safe = np.where(val > 0, val, 1.0)
        _accumulate(a, np.where(val > 0, g / (2.0 * safe), 0.0), grads)

    out._backward = backward
    return out


def absolute(a: Node) -> Node:
    a = _lift(a)
    av = a.value
    out = Node(np.abs(av), (a,), "abs")

    def backward(g, grads):
        _accumulate(a, np.sign(av) * g, grads)

    out._backward = backward
    return out


def tanh(a: Node) -> Node:
    a = _lift(a)
    val = np.tanh(a.value)
    out = Node(val, (a,), "tanh")

    def backward(g, grads):
        _accumulate(a, g * (1.0 - val * val), grads)

    out._backward = backward
    return out


def silu(a: Node) -> Node:
    a = _lift(a)
    av = a.value
    sig = 0.5 * (1.0 + np.tanh(0.5 * av))
    out = Node(av * sig, (a,), "silu")

    def backward(g, grads):
        _accumulate(a, g * (sig * (1.0 + av * (1.0 - sig))), grads)

    out._backward = backward
    return out


def concat_cols(parts: Sequence[Node]) -> Node:
    parts = [_lift(p) for p in parts]
    rows = {p.value.shape[0] for p in parts}
    if len(rows) != 1 or any(p.value.ndim != 2 for p in parts):
        raise ShapeError("concat_cols needs matrices with equal row counts")
    widths = [p.value.shape[1] for p in parts]
    out = Node(np.concatenate([p.value for p in parts], axis=1), tuple(parts), "concat")

    def backward(g, grads):
        start = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                _accumulate(p, g[:, start:start + w], grads)
            start += w

    out._backward = backward
    return out


def take_rows(table: Node, index) -> Node:
    """Gather rows ``table[index]``; gradients scatter-add back into the table."""
    table = _lift(table)
    index = np.asarray(index, dtype=np.intp)
    if table.value.ndim != 2:
        raise ShapeError("take_rows expects a matrix")
    if index.size and (index.min() < 0 or index.max() >= table.value.shape[0]):
        raise IndexError("take_rows index out of range")
    out = Node(table.value[index], (table,), "take_rows")
    shape = table.value.shape

    def backward(g, grads):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        _accumulate(table, full, grads)

    out._backward = backward
    return out


def slice_rows(a: Node, start: int, stop: int) -> Node:
    a = _lift(a)
    out = Node(a.value[start:stop], (a,), "slice_rows")
    shape = a.value.shape

    def backward(g, grads):
        full = np.zeros(shape)
        full[start:stop] = g
        _accumulate(a, full, grads)

    out._backward = backward
    return out


def _topological(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate dloss/dleaf into ``grad`` of every reachable leaf."""
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = node.grad + g
        else:
            node._backward(g, grads)


@dataclass
class GradEntry:
    param: int
    index: tuple
    analytic: float
    numeric: float
    rel_error: float
    status: str  # "pass", "fail", "kink" or "nonfinite"


@dataclass
class GradCheckReport:
    entries: list[GradEntry] = field(default_factory=list)
    rtol: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(e.status == "pass" for e in self.entries)

    @property
    def flagged(self) -> list[GradEntry]:
        return [e for e in self.entries if e.status != "pass"]

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)


def grad_check(f: Callable[[list[Node]], Node], params: Sequence[Node],
               h: float = 1e-5, rtol: float = 1e-4, floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients of ``f(params)`` with central differences.

    ``f`` must rebuild its graph from the current values of ``params`` on every
    call. Relative error is ``|a - n| / max(|a|, |n|, floor)``. A parameter
    whose one-sided difference quotients disagree is reported as a kink.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(f(params))
    analytic = [p.grad.copy() for p in params]

    def value() -> float:
        try:
            return float(f(params).value)
        except NumericalError:
            return float("nan")

    f0 = value()
    report = GradCheckReport(rtol=rtol)
    for pi, p in enumerate(params):
        for idx in np.ndindex(p.value.shape):
            orig = p.value[idx]
            p.value[idx] = orig + h
            fp = value()
            p.value[idx] = orig - h
            fm = value()
            p.value[idx] = orig
            a = float(analytic[pi][idx])
            if not all(np.isfinite([fp, fm, f0, a])):
                report.entries.append(GradEntry(pi, idx, a, float("nan"), float("inf"), "nonfinite"))
                continue
            num = (fp - fm) / (2 * h)
            right, left = (fp - f0) / h, (f0 - fm) / h
            err = abs(a - num) / max(abs(a), abs(num), floor)
            jump = abs(right - left)
            if jump > np.sqrt(h) and jump > 0.1 * max(abs(right), abs(left)):
                status = "kink"
            else:
                status = "pass" if err <= rtol else "fail"
            report.entries.append(GradEntry(pi, idx, a, num, err, status))
    for p in params:
        p.zero_grad()
    return report
