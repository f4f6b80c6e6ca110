"""Minimal differentiable dense-computation core."""

from dosa.numerics.gradcheck import finite_difference_check
from dosa.numerics.optim import Adam, optimizer_step, zero_grads
from dosa.numerics.tape import (
    Parameter,
    Tape,
    Tensor,
    add,
    add_row,
    as_tensor,
    backward,
    clamp_min,
    custom,
    elementwise,
    exp,
    matmul,
    mul,
    neg,
    row_sum,
    scale,
    square,
    stop_gradient,
    sub,
    tanh,
    total,
)

__all__ = [
    "Adam", "Parameter", "Tape", "Tensor", "add", "add_row", "as_tensor", "backward",
    "clamp_min", "custom", "elementwise", "exp", "finite_difference_check", "matmul",
    "mul", "neg", "optimizer_step", "row_sum", "scale", "square", "stop_gradient",
    "sub", "tanh", "total", "zero_grads",
]
