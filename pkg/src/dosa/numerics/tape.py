"""Define-by-run reverse-mode differentiation over dense float64 arrays.

Ops executed while a :class:`Tape` is active append a record holding their
inputs, output and vector-Jacobian product. :func:`backward` walks the
records in exact reverse order. Outside a tape the same ops simply compute.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from dosa.errors import ContractError, DimensionError


class Tensor:
    """An immutable value node. ``requires_grad`` marks a path to a trainable leaf."""

    __slots__ = ("value", "requires_grad", "__weakref__")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Mutable leaf: ``value`` is updated in place by the optimizer."""

    __slots__ = ("grad", "trainable", "name")

    def __init__(self, value, trainable: bool = True, name: str = ""):
        super().__init__(np.array(value, dtype=np.float64, copy=True), requires_grad=trainable)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable
        self.name = name

    def set_trainable(self, flag: bool):
        self.trainable = bool(flag)
        self.requires_grad = bool(flag)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Record:
    op: str
    output: Tensor
    inputs: tuple
    vjp: Callable


class Tape:
    """Ordered log of differentiable ops; use as a context manager."""

    def __init__(self):
        self.records: list[Record] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.records)


_ACTIVE: list[Tape] = []


def _emit(op: str, value, inputs: Sequence[Tensor], vjp) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs and _ACTIVE:
        _ACTIVE[-1].records.append(Record(op, out, tuple(inputs), vjp))
    return out


def backward(tape: Tape, output: Tensor) -> None:
    """Accumulate d(output)/d(param) into ``grad`` of every trainable Parameter."""
    if output.value.size != 1:
        raise ContractError(f"backward needs a 1x1 output, got shape {output.value.shape}")
    grads = {id(output): np.ones_like(output.value)}
    leaves = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            grads[key] = grads[key] + gi if key in grads else gi
            if isinstance(inp, Parameter):
                leaves[key] = inp
    if isinstance(output, Parameter) and output.trainable:
        leaves[id(output)] = output
    for key, p in leaves.items():
        if p.trainable and key in grads:
            p.grad = p.grad + grads[key]


# --------------------------------------------------------------------------
# ops
# --------------------------------------------------------------------------


def _same_shape(op, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _emit("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _emit("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def add_row(x: Tensor, row: Tensor) -> Tensor:
    """Broadcast a ``1 x c`` row over every row of ``x`` (bias, margin)."""
    if x.value.ndim != 2 or row.shape != (1, x.shape[1]):
        raise DimensionError(f"add_row: row {row.shape} does not fit {x.shape}")
    return _emit("add_row", x.value + row.value, (x, row),
                 lambda g: (g, g.sum(axis=0, keepdims=True)))


def neg(x: Tensor) -> Tensor:
    return _emit("neg", -x.value, (x,), lambda g: (-g,))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scale", x.value * c, (x,), lambda g: (g * c,))


def square(x: Tensor) -> Tensor:
    xv = x.value
    return _emit("square", xv * xv, (x,), lambda g: (2.0 * xv * g,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x: Tensor, cap: float | None = None) -> Tensor:
    """``exp(min(x, cap))``.

    The cap is a forward-only overflow guard: the backward pass uses the
    capped value as the local slope instead of zeroing it, so saturated
    terms still push training in the right direction.
    """
    arg = x.value if cap is None else np.minimum(x.value, cap)
    y = np.exp(arg)
    return _emit("exp", y, (x,), lambda g: (g * y,))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    xv = x.value
    keep = xv >= floor
    return _emit("clamp_min", np.where(keep, xv, floor), (x,), lambda g: (g * keep,))


def stop_gradient(x: Tensor) -> Tensor:
    """Identity forward; nothing flows back into ``x``."""
    return Tensor(x.value.copy(), requires_grad=False)


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a 1x1 tensor."""
    shape = x.shape
    return _emit("sum", np.array([[x.value.sum()]]), (x,),
                 lambda g: (np.full(shape, g.item()),))


def row_sum(x: Tensor) -> Tensor:
    """Sum across columns, ``n x c -> n x 1``."""
    shape = x.shape
    return _emit("row_sum", x.value.sum(axis=1, keepdims=True), (x,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


_UNARY = {"tanh": tanh, "exp": exp, "neg": neg, "square": square}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(kind: str, *inputs, **kwargs) -> Tensor:
    """Name-dispatched entry to the elementwise op set.

    ``kind`` is one of add, sub, mul, tanh, exp, neg, square, clamp_min;
    clamp_min takes its floor as ``c=`` or a second positional argument.
    """
    inputs = [as_tensor(i) if not isinstance(i, (int, float)) else i for i in inputs]
    if kind in _BINARY:
        if len(inputs) != 2:
            raise ContractError(f"{kind} takes two inputs")
        return _BINARY[kind](*inputs)
    if kind in _UNARY:
        return _UNARY[kind](inputs[0], **kwargs)
    if kind == "clamp_min":
        c = kwargs.get("c", inputs[1] if len(inputs) > 1 else None)
        if c is None:
            raise ContractError("clamp_min needs a floor")
        return clamp_min(inputs[0], float(c))
    raise ContractError(f"unknown elementwise op {kind!r}")


def custom(op: str, value, inputs: Sequence[Tensor], vjp) -> Tensor:
    """Record a fused op whose vector-Jacobian product the caller supplies."""
    return _emit(op, value, inputs, vjp)
