"""Hot loops of the spiking forward/backward pass.

Every kernel exists twice: a numba-compiled scalar loop and a vectorised
numpy version that loops only over time. Both are kept numerically
equivalent (tested to 1e-12); :func:`set_backend` picks one at runtime and
``DOSA_BACKEND`` picks the default at import.
"""

import math

import numpy as np

from dosa._jit import HAVE_NUMBA, default_backend, njit

_backend = default_backend()


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Switch kernel implementation; returns the previous backend name."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    previous, _backend = _backend, name
    return previous


# --------------------------------------------------------------------------
# surrogate spike function (arctangent family)
# --------------------------------------------------------------------------


def atan_surrogate(x, alpha):
    """Smooth stand-in for Heaviside(x): atan(pi*alpha*x/2)/pi + 1/2."""
    return np.arctan(0.5 * np.pi * alpha * x) / np.pi + 0.5


def atan_surrogate_grad(x, alpha):
    return (0.5 * alpha) / (1.0 + (0.5 * np.pi * alpha * x) ** 2)


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------


@njit
def _plif_forward_nb(current, decay, v_th, v_reset, alpha, smooth):
    T, n, k = current.shape
    h_out = np.empty_like(current)
    s_out = np.empty_like(current)
    v_prev_out = np.empty_like(current)
    c = 0.5 * math.pi * alpha
    for i in range(n):
        for j in range(k):
            v = v_reset
            for t in range(T):
                h = v + decay * (current[t, i, j] - (v - v_reset))
                x = h - v_th
                if smooth:
                    s = math.atan(c * x) / math.pi + 0.5
                else:
                    s = 1.0 if x >= 0.0 else 0.0
                v_prev_out[t, i, j] = v
                h_out[t, i, j] = h
                s_out[t, i, j] = s
                v = h * (1.0 - s) + v_reset * s
    return h_out, s_out, v_prev_out


@njit
def _plif_backward_nb(grad_spikes, current, h, s, v_prev, decay, v_th, v_reset, alpha):
    T, n, k = current.shape
    grad_current = np.empty_like(current)
    grad_decay = 0.0
    c = 0.5 * math.pi * alpha
    for i in range(n):
        for j in range(k):
            gv = 0.0
            for t in range(T - 1, -1, -1):
                ht = h[t, i, j]
                st = s[t, i, j]
                x = ht - v_th
                sg = (0.5 * alpha) / (1.0 + (c * x) * (c * x))
                dh = gv * (1.0 - st) + (grad_spikes[t, i, j] + gv * (v_reset - ht)) * sg
                grad_current[t, i, j] = dh * decay
                grad_decay += dh * (current[t, i, j] - v_prev[t, i, j] + v_reset)
                gv = dh * (1.0 - decay)
    return grad_current, grad_decay


@njit
def _accumulate_tanh_nb(drive):
    T, n, r = drive.shape
    th = np.empty_like(drive)
    p = np.zeros((n, r))
    out = np.zeros((n, r))
    for t in range(T):
        for i in range(n):
            for j in range(r):
                p[i, j] += drive[t, i, j]
                v = math.tanh(p[i, j])
                th[t, i, j] = v
                out[i, j] += v
    return th, out / T


@njit
def _accumulate_tanh_backward_nb(grad_out, th):
    T, n, r = th.shape
    grad_drive = np.empty_like(th)
    for i in range(n):
        for j in range(r):
            g = grad_out[i, j] / T
            acc = 0.0
            for t in range(T - 1, -1, -1):
                v = th[t, i, j]
                acc += g * (1.0 - v * v)
                grad_drive[t, i, j] = acc
    return grad_drive


@njit
def _column_stable_matmul_nb(x, w):
    n, k = x.shape
    r = w.shape[1]
    out = np.zeros((n, r))
    for i in range(n):
        for q in range(k):
            xv = x[i, q]
            if xv != 0.0:
                for j in range(r):
                    out[i, j] += xv * w[q, j]
    return out


# --------------------------------------------------------------------------
# numpy fallbacks
# --------------------------------------------------------------------------


def _plif_forward_np(current, decay, v_th, v_reset, alpha, smooth):
    T = current.shape[0]
    h_out = np.empty_like(current)
    s_out = np.empty_like(current)
    v_prev_out = np.empty_like(current)
    v = np.full(current.shape[1:], v_reset, dtype=np.float64)
    for t in range(T):
        h = v + decay * (current[t] - (v - v_reset))
        x = h - v_th
        if smooth:
            s = atan_surrogate(x, alpha)
        else:
            s = (x >= 0.0).astype(np.float64)
        v_prev_out[t] = v
        h_out[t] = h
        s_out[t] = s
        v = h * (1.0 - s) + v_reset * s
    return h_out, s_out, v_prev_out


def _plif_backward_np(grad_spikes, current, h, s, v_prev, decay, v_th, v_reset, alpha):
    T = current.shape[0]
    grad_current = np.empty_like(current)
    grad_decay = 0.0
    gv = np.zeros(current.shape[1:])
    for t in range(T - 1, -1, -1):
        sg = atan_surrogate_grad(h[t] - v_th, alpha)
        dh = gv * (1.0 - s[t]) + (grad_spikes[t] + gv * (v_reset - h[t])) * sg
        grad_current[t] = dh * decay
        grad_decay += float(np.sum(dh * (current[t] - v_prev[t] + v_reset)))
        gv = dh * (1.0 - decay)
    return grad_current, grad_decay


def _accumulate_tanh_np(drive):
    th = np.tanh(np.cumsum(drive, axis=0))
    out = np.zeros(drive.shape[1:])
    for t in range(drive.shape[0]):
        out += th[t]
    return th, out / drive.shape[0]


def _accumulate_tanh_backward_np(grad_out, th):
    T = th.shape[0]
    local = (grad_out / T) * (1.0 - th * th)
    return np.cumsum(local[::-1], axis=0)[::-1].copy()


def _column_stable_matmul_np(x, w):
    # one gemv per column: a column's result never depends on the others
    out = np.empty((x.shape[0], w.shape[1]))
    for j in range(w.shape[1]):
        out[:, j] = x @ np.ascontiguousarray(w[:, j])
    return out


_IMPL = {
    "numba": (
        _plif_forward_nb,
        _plif_backward_nb,
        _accumulate_tanh_nb,
        _accumulate_tanh_backward_nb,
        _column_stable_matmul_nb,
    ),
    "numpy": (
        _plif_forward_np,
        _plif_backward_np,
        _accumulate_tanh_np,
        _accumulate_tanh_backward_np,
        _column_stable_matmul_np,
    ),
}


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


# --------------------------------------------------------------------------
# public dispatchers
# --------------------------------------------------------------------------


def plif_forward(current, decay, v_th=1.0, v_reset=0.0, alpha=2.0, smooth=False):
    """Run the PLIF recurrence over a ``(T, n, k)`` input-current block.

    Returns ``(h, s, v_prev)``: pre-spike membrane, spikes and the membrane
    entering each step (needed by the backward pass).
    """
    fn = _IMPL[_backend][0]
    return fn(_f64(current), float(decay), float(v_th), float(v_reset), float(alpha), bool(smooth))


def plif_backward(grad_spikes, current, h, s, v_prev, decay, v_th=1.0, v_reset=0.0, alpha=2.0):
    """Backprop through time; returns ``(grad_current, grad_decay)``."""
    fn = _IMPL[_backend][1]
    gc, gd = fn(
        _f64(grad_spikes), _f64(current), _f64(h), _f64(s), _f64(v_prev),
        float(decay), float(v_th), float(v_reset), float(alpha),
    )
    return gc, float(gd)


def accumulate_tanh(drive):
    """Integrate ``drive`` over time, squash with tanh, average over T."""
    return _IMPL[_backend][2](_f64(drive))


def accumulate_tanh_backward(grad_out, th):
    return _IMPL[_backend][3](_f64(grad_out), _f64(th))


def column_stable_matmul(x, w):
    """``x @ w`` where each output column depends only on the matching column of ``w``.

    Plain BLAS may change its blocking with the width of ``w``; expanding
    the output heads must not perturb existing class scores by even one ulp.
    """
    return _IMPL[_backend][4](_f64(x), _f64(w))
