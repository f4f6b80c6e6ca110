"""Spike-domain layers: Poisson rate encoder, PLIF hidden layer, accumulator readout."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dosa import kernels
from dosa.errors import ContractError, RangeError
from dosa.numerics import Parameter, Tensor, custom


@dataclass(frozen=True)
class EncoderConfig:
    timesteps: int = 10
    dt: float = 1.0  # ms per step; T steps cover T*dt ms
    seed: int = 0

    def __post_init__(self):
        if self.timesteps < 1:
            raise ContractError(f"timesteps must be >= 1, got {self.timesteps}")


def poisson_encode(features, timesteps=10, rng=None) -> np.ndarray:
    """Bernoulli spike trains with per-step firing probability equal to the feature.

    Parameters
    ----------
    features : array (n, m) with entries in [0, 1]
    timesteps : int or EncoderConfig
    rng : numpy Generator; defaults to one seeded from the config

    Returns
    -------
    float64 array (T, n, m) of zeros and ones.
    """
    if isinstance(timesteps, EncoderConfig):
        cfg = timesteps
        timesteps = cfg.timesteps
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
    if timesteps < 1:
        raise ContractError(f"timesteps must be >= 1, got {timesteps}")
    if rng is None:
        rng = np.random.default_rng(0)
    x = np.asarray(features, dtype=np.float64)
    bad = ~((x >= 0.0) & (x <= 1.0))
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise RangeError(f"feature at index {idx} is {x[idx]!r}, outside [0, 1]")
    u = rng.random((timesteps,) + x.shape)
    return (u < x).astype(np.float64)


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


class PlifLayer:
    """Fully connected layer of parametric LIF neurons sharing one learnable time constant.

    ``1/tau = sigmoid(tau_raw)``; membrane starts at ``v_reset`` for every
    sample and is hard-reset after a spike. The backward pass replaces the
    Heaviside step with the arctangent surrogate of width ``alpha``.
    """

    def __init__(self, fan_in, fan_out, rng, tau=2.0, v_th=1.0, v_reset=0.0, alpha=2.0):
        if fan_in < 1 or fan_out < 1:
            raise ContractError("layer dimensions must be >= 1")
        bound = 1.0 / math.sqrt(fan_in)
        self.weight = Parameter(rng.uniform(-bound, bound, (fan_in, fan_out)), name="weight")
        self.bias = Parameter(np.zeros((1, fan_out)), name="bias")
        self.tau_raw = Parameter([[-math.log(tau - 1.0)]], name="tau_raw")
        self.v_th = v_th
        self.v_reset = v_reset
        self.alpha = alpha
        self.membrane = None

    @property
    def fan_in(self):
        return self.weight.shape[0]

    @property
    def fan_out(self):
        return self.weight.shape[1]

    @property
    def decay(self) -> float:
        return _sigmoid(float(self.tau_raw.value[0, 0]))

    def parameters(self):
        return [self.weight, self.bias, self.tau_raw]

    # single-step simulation; no gradients
    def reset_state(self, n):
        self.membrane = np.full((n, self.fan_out), float(self.v_reset))

    def step(self, current) -> np.ndarray:
        if self.membrane is None:
            raise ContractError("call reset_state before stepping")
        a = self.decay
        v = self.membrane
        h = v + a * (np.asarray(current, dtype=np.float64) - (v - self.v_reset))
        s = (h - self.v_th >= 0.0).astype(np.float64)
        self.membrane = h * (1.0 - s) + self.v_reset * s
        return s

    def forward(self, spikes: Tensor, smooth: bool = False) -> Tensor:
        """Simulate all T steps for a batch; ``spikes`` is ``(T, n, fan_in)``.

        ``smooth=True`` swaps the forward Heaviside for its surrogate, which
        makes the layer genuinely differentiable (used by gradient checks).
        """
        x = spikes.value
        T, n, m = x.shape
        if m != self.fan_in:
            raise ContractError(f"layer expects {self.fan_in} inputs, got {m}")
        W, b, a = self.weight.value, self.bias.value, self.decay
        xf = x.reshape(T * n, m)
        current = (xf @ W + b).reshape(T, n, self.fan_out)
        h, s, v_prev = kernels.plif_forward(current, a, self.v_th, self.v_reset, self.alpha, smooth)
        v_th, v_reset, alpha = self.v_th, self.v_reset, self.alpha

        def vjp(g):
            gc, gd = kernels.plif_backward(g, current, h, s, v_prev, a, v_th, v_reset, alpha)
            gcf = gc.reshape(T * n, -1)
            return (
                (gcf @ W.T).reshape(T, n, m),
                xf.T @ gcf,
                gcf.sum(axis=0, keepdims=True),
                np.array([[gd * a * (1.0 - a)]]),
            )

        return custom("plif", s, (spikes, self.weight, self.bias, self.tau_raw), vjp)


def plif_step(layer: PlifLayer, current) -> np.ndarray:
    return layer.step(current)


class AccumulatorHead:
    """Non-spiking readout: integrates drive over time, output = mean_t tanh(potential)."""

    def __init__(self, fan_in, num_out, rng):
        bound = 1.0 / math.sqrt(fan_in)
        self.weight = Parameter(rng.uniform(-bound, bound, (fan_in, num_out)), name="weight")
        self.bias = Parameter(np.zeros((1, num_out)), name="bias")

    @property
    def fan_in(self):
        return self.weight.shape[0]

    @property
    def num_out(self):
        return self.weight.shape[1]

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, spikes: Tensor) -> Tensor:
        x = spikes.value
        T, n, m = x.shape
        if m != self.fan_in:
            raise ContractError(f"head expects {self.fan_in} inputs, got {m}")
        if T < 1:
            raise ContractError("need at least one timestep")
        W = self.weight.value
        xf = x.reshape(T * n, m)
        drive = (kernels.column_stable_matmul(xf, W) + self.bias.value).reshape(T, n, -1)
        th, out = kernels.accumulate_tanh(drive)

        def vjp(g):
            gd = kernels.accumulate_tanh_backward(g, th).reshape(T * n, -1)
            return (
                (gd @ W.T).reshape(T, n, m),
                xf.T @ gd,
                gd.sum(axis=0, keepdims=True),
            )

        return custom("readout", out, (spikes, self.weight, self.bias), vjp)

    def expand(self, extra: int, rng):
        """Append ``extra`` freshly initialised output columns; old columns are copied bit-for-bit."""
        if extra <= 0:
            return
        bound = 1.0 / math.sqrt(self.fan_in)
        new_w = rng.uniform(-bound, bound, (self.fan_in, extra))
        trainable = self.weight.trainable
        self.weight = Parameter(np.concatenate([self.weight.value, new_w], axis=1), trainable, "weight")
        self.bias = Parameter(np.concatenate([self.bias.value, np.zeros((1, extra))], axis=1),
                              trainable, "bias")


def readout_forward(head: AccumulatorHead, spikes) -> Tensor:
    if not isinstance(spikes, Tensor):
        spikes = Tensor(spikes)
    return head.forward(spikes)
