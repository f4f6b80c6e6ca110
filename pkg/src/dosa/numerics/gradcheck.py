import numpy as np

from dosa.errors import EvaluationError
from dosa.numerics.tape import Tape, backward


def _scalar(out) -> float:
    v = float(np.asarray(out.value).reshape(-1)[0])
    if not np.isfinite(v):
        raise EvaluationError(f"objective evaluated to {v}")
    return v


def finite_difference_check(f, params, h: float = 1e-4) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` is a zero-argument callable returning a 1x1 Tensor built from
    ``params``; it must be deterministic. The denominator is
    ``max(|analytic|, |numeric|, 1e-8)`` per coordinate.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = list(params)
    saved = [p.grad for p in params]
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = f()
    _scalar(out)
    backward(tape, out)
    analytic = [p.grad.copy() for p in params]
    for p, g in zip(params, saved):
        p.grad = g

    worst = 0.0
    for p, a in zip(params, analytic):
        for idx in np.ndindex(p.value.shape):
            orig = p.value[idx]
            p.value[idx] = orig + h
            up = _scalar(f())
            p.value[idx] = orig - h
            down = _scalar(f())
            p.value[idx] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a[idx]), abs(numeric), 1e-8)
            worst = max(worst, abs(a[idx] - numeric) / denom)
    return worst
