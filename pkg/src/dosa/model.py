"""The dual-output spiking network and its checkpoint format."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from dosa.errors import ContractError, DimensionError
from dosa.numerics import Parameter, Tensor
from dosa.spiking import AccumulatorHead, PlifLayer, poisson_encode

CHECKPOINT_FORMAT = "dosa-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class DosaConfig:
    input_dim: int
    num_labels: int
    hidden_layers: tuple = ()
    timesteps: int = 10
    seed: int = 0
    tau: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0
    surrogate_alpha: float = 2.0

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if self.input_dim < 1:
            raise ContractError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_labels < 1:
            raise ContractError(f"num_labels must be >= 1, got {self.num_labels}")
        if self.timesteps < 1:
            raise ContractError(f"timesteps must be >= 1, got {self.timesteps}")
        if any(h < 1 for h in self.hidden_layers):
            raise ContractError(f"hidden layer widths must be >= 1, got {self.hidden_layers}")
        if self.tau <= 1.0:
            raise ContractError("tau must exceed 1 so that 1/tau lies in (0, 1)")


def predict_labels(y_plus, y_minus) -> np.ndarray:
    """+1 where the positive head wins, -1 otherwise (ties go negative)."""
    yp = np.asarray(y_plus.value if isinstance(y_plus, Tensor) else y_plus)
    ym = np.asarray(y_minus.value if isinstance(y_minus, Tensor) else y_minus)
    if yp.shape != ym.shape:
        raise DimensionError(f"score shapes differ: {yp.shape} vs {ym.shape}")
    return np.where(yp > ym, 1, -1).astype(np.int8)


@dataclass
class DualPrediction:
    y_plus: np.ndarray
    y_minus: np.ndarray
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        self.labels = predict_labels(self.y_plus, self.y_minus)


class DosaModel:
    def __init__(self, config: DosaConfig, extractor, positive_head, negative_head):
        self.config = config
        self.extractor = list(extractor)
        self.positive_head = positive_head
        self.negative_head = negative_head

    @property
    def num_labels(self) -> int:
        return self.positive_head.num_out

    def parameters(self):
        params = []
        for layer in self.extractor:
            params.extend(layer.parameters())
        return params + self.positive_head.parameters() + self.negative_head.parameters()

    def encode(self, features, rng) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.config.input_dim:
            raise DimensionError(
                f"expected features of shape (n, {self.config.input_dim}), got {features.shape}"
            )
        return poisson_encode(features, self.config.timesteps, rng)

    def scores(self, spikes: np.ndarray, smooth: bool = False):
        """Differentiable pass from an encoded spike block to ``(y_plus, y_minus)`` tensors."""
        h = Tensor(spikes)
        for layer in self.extractor:
            h = layer.forward(h, smooth=smooth)
        return self.positive_head.forward(h), self.negative_head.forward(h)

    def forward(self, features, rng) -> DualPrediction:
        yp, ym = self.scores(self.encode(features, rng))
        return DualPrediction(yp.value, ym.value)

    def copy(self) -> "DosaModel":
        return copy.deepcopy(self)


def init_weights(config: DosaConfig, rng=None) -> DosaModel:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, tau = config.tau."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    extractor = []
    fan_in = config.input_dim
    for width in config.hidden_layers:
        extractor.append(PlifLayer(fan_in, width, rng, tau=config.tau, v_th=config.v_th,
                                   v_reset=config.v_reset, alpha=config.surrogate_alpha))
        fan_in = width
    pos = AccumulatorHead(fan_in, config.num_labels, rng)
    neg = AccumulatorHead(fan_in, config.num_labels, rng)
    return DosaModel(config, extractor, pos, neg)


def forward(model: DosaModel, features, rng) -> DualPrediction:
    return model.forward(features, rng)


def expand_heads(model: DosaModel, new_label_count: int, rng) -> DosaModel:
    """Return a copy whose heads carry ``new_label_count`` extra output columns."""
    new = model.copy()
    if new_label_count <= 0:
        return new
    new.positive_head.expand(new_label_count, rng)
    new.negative_head.expand(new_label_count, rng)
    new.config.num_labels = new.positive_head.num_out
    return new


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def _head_state(head):
    return {"weight": head.weight.value.tolist(), "bias": head.bias.value[0].tolist()}


def _load_head(state, rng):
    w = np.array(state["weight"], dtype=np.float64)
    head = AccumulatorHead(w.shape[0], w.shape[1], rng)
    head.weight = Parameter(w, name="weight")
    head.bias = Parameter(np.array([state["bias"]], dtype=np.float64), name="bias")
    return head


def checkpoint_dict(model: DosaModel, margin: Parameter | None = None, seed_lineage=(), meta=None):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {**asdict(model.config), "hidden_layers": list(model.config.hidden_layers)},
        "extractor": [
            {
                "weight": layer.weight.value.tolist(),
                "bias": layer.bias.value[0].tolist(),
                "tau_raw": float(layer.tau_raw.value[0, 0]),
            }
            for layer in model.extractor
        ],
        "positive_head": _head_state(model.positive_head),
        "negative_head": _head_state(model.negative_head),
        "margin": None if margin is None else margin.value[0].tolist(),
        "margin_trainable": None if margin is None else bool(margin.trainable),
        "seed_lineage": [int(s) for s in seed_lineage],
        "meta": meta or {},
    }


def save_checkpoint(path, model, margin=None, seed_lineage=(), meta=None):
    Path(path).write_text(json.dumps(checkpoint_dict(model, margin, seed_lineage, meta), indent=1))


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, margin_or_None, raw_dict)``."""
    raw = json.loads(Path(path).read_text())
    if raw.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path} is not a DOSA checkpoint")
    if raw.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {raw.get('version')}")
    config = DosaConfig(**raw["config"])
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    model = init_weights(config, rng)
    for layer, state in zip(model.extractor, raw["extractor"]):
        layer.weight = Parameter(np.array(state["weight"], dtype=np.float64), name="weight")
        layer.bias = Parameter(np.array([state["bias"]], dtype=np.float64), name="bias")
        layer.tau_raw = Parameter([[state["tau_raw"]]], name="tau_raw")
    model.positive_head = _load_head(raw["positive_head"], rng)
    model.negative_head = _load_head(raw["negative_head"], rng)
    margin = None
    if raw.get("margin") is not None:
        margin = Parameter(np.array([raw["margin"]], dtype=np.float64),
                           trainable=bool(raw.get("margin_trainable")), name="margin")
    return model, margin, raw
