"""Maximum-margin and focal maximum-margin losses for dual-output networks.

Both compare the confidence ``zeta = y * (y_plus - y_minus)`` against a
per-class margin row ``b``. The focal variant multiplies each squared
deviation by ``exp(-(zeta - b))`` floored at ``importance_clamp_floor``;
that factor is gradient-stopped unless ``grad_through_importance``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dosa.errors import ContractError, DegenerateMarginError, LabelDomainError
from dosa.numerics import (
    Parameter,
    Tensor,
    add_row,
    as_tensor,
    clamp_min,
    exp,
    mul,
    neg,
    row_sum,
    square,
    stop_gradient,
    sub,
    total,
)

EXP_CAP = 80.0


@dataclass
class LossConfig:
    variant: str = "fmm"
    importance_clamp_floor: float = 0.001
    grad_through_importance: bool = False
    margin_trainable: bool | None = None
    mm_exponent: str = "sample"  # "sample": exp of squared norm per sample; "class": per entry

    def __post_init__(self):
        if self.variant not in ("mm", "fmm"):
            raise ContractError(f"loss variant must be 'mm' or 'fmm', got {self.variant!r}")
        if self.importance_clamp_floor <= 0:
            raise ContractError("importance_clamp_floor must be positive")
        if self.mm_exponent not in ("sample", "class"):
            raise ContractError(f"mm_exponent must be 'sample' or 'class', got {self.mm_exponent!r}")
        if self.margin_trainable is None:
            self.margin_trainable = self.variant == "fmm"


@dataclass
class LossOutput:
    total: Tensor
    saturated: bool
    n_samples: int

    @property
    def value(self) -> float:
        return float(self.total.value[0, 0])

    @property
    def mean_per_sample(self) -> float:
        return self.value / max(self.n_samples, 1)


def make_margin(num_labels: int, trainable: bool, init: float = 1.0) -> Parameter:
    return Parameter(np.full((1, num_labels), float(init)), trainable=trainable, name="margin")


def extend_margin(margin: Parameter, extra: int, init: float = 1.0) -> Parameter:
    """New margin Parameter with ``extra`` entries appended (old entries copied)."""
    if extra <= 0:
        return Parameter(margin.value, trainable=margin.trainable, name="margin")
    value = np.concatenate([margin.value, np.full((1, extra), float(init))], axis=1)
    return Parameter(value, trainable=margin.trainable, name="margin")


def _check_bipolar(y):
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 1.0) | (y == -1.0)):
        bad = np.argwhere((y != 1.0) & (y != -1.0))[0]
        raise LabelDomainError(f"labels must be -1/+1; found {y[tuple(bad)]!r} at {tuple(bad)}")
    return y


def zeta(y, y_plus, y_minus) -> Tensor:
    y = _check_bipolar(y)
    return mul(Tensor(y), sub(as_tensor(y_plus), as_tensor(y_minus)))


def _as_margin(b, width) -> Tensor:
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=np.float64).reshape(1, -1))
    if b.shape != (1, width):
        b = Tensor(np.broadcast_to(b.value.reshape(1, -1), (1, width)).copy())
    return b


def loss_mm(z: Tensor, b, per: str = "sample") -> LossOutput:
    """Sum over samples of exp(||zeta_k - b||^2), exponent capped at EXP_CAP.

    ``per="class"`` exponentiates each squared entry separately instead.
    """
    z = as_tensor(z)
    b = _as_margin(b, z.shape[1])
    sq = square(add_row(z, neg(b)))
    arg = row_sum(sq) if per == "sample" else sq
    saturated = bool(np.any(arg.value > EXP_CAP))
    return LossOutput(total(exp(arg, cap=EXP_CAP)), saturated, z.shape[0])


def importance_factor(d: Tensor, floor: float) -> Tensor:
    return clamp_min(exp(neg(d), cap=EXP_CAP), floor)


def loss_fmm(z: Tensor, b, cfg: LossConfig | None = None) -> LossOutput:
    cfg = cfg or LossConfig()
    z = as_tensor(z)
    b = _as_margin(b, z.shape[1])
    d = add_row(z, neg(b))
    saturated = bool(np.any(-d.value > EXP_CAP))
    factor = importance_factor(d, cfg.importance_clamp_floor)
    if not cfg.grad_through_importance:
        factor = stop_gradient(factor)
    return LossOutput(total(mul(factor, square(d))), saturated, z.shape[0])


def compute_loss(cfg: LossConfig, y, y_plus, y_minus, margin) -> LossOutput:
    z = zeta(y, y_plus, y_minus)
    if cfg.variant == "mm":
        return loss_mm(z, margin, per=cfg.mm_exponent)
    return loss_fmm(z, margin, cfg)


def normalized_margins(b) -> np.ndarray:
    """|b_k| / sum_j |b_j|."""
    v = np.abs(np.asarray(b.value if isinstance(b, Tensor) else b, dtype=np.float64).reshape(-1))
    s = v.sum()
    if s == 0:
        raise DegenerateMarginError("margin vector is all zeros")
    return v / s
