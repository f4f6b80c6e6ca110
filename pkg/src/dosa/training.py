"""Gradient training loop shared by single-task (MLL) runs and SEA tasks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from dosa.errors import NonFiniteLossError
from dosa.losses import LossConfig, compute_loss, make_margin
from dosa.metrics import evaluate
from dosa.model import DosaConfig, DosaModel, init_weights
from dosa.numerics import Adam, Tape, backward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int | None = 32  # None -> full batch
    resample_encoding: bool = True


@dataclass
class TrainLog:
    epoch_loss: list = field(default_factory=list)
    epoch_loss_mean: list = field(default_factory=list)
    saturated_epochs: list = field(default_factory=list)

    def to_dict(self):
        return {"epoch_loss": self.epoch_loss, "epoch_loss_mean": self.epoch_loss_mean,
                "saturated_epochs": self.saturated_epochs}


def train_model(model: DosaModel, margin, features, labels, loss_cfg: LossConfig,
                train_cfg: TrainConfig, rng) -> TrainLog:
    """Optimise ``model`` (and ``margin`` when trainable) in place with Adam.

    Raises NonFiniteLossError as soon as a batch loss is NaN/inf.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = x.shape[0]
    trace = TrainLog()
    if train_cfg.epochs <= 0 or n == 0:
        return trace
    params = model.parameters() + ([margin] if margin.trainable else [])
    opt = Adam(params, lr=train_cfg.lr)
    bs = n if not train_cfg.batch_size else min(int(train_cfg.batch_size), n)
    fixed_spikes = None if train_cfg.resample_encoding else model.encode(x, rng)

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        epoch_total, saturated = 0.0, False
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            spikes = model.encode(x[idx], rng) if fixed_spikes is None else fixed_spikes[:, idx]
            with Tape() as tape:
                yp, ym = model.scores(spikes)
                out = compute_loss(loss_cfg, y[idx], yp, ym, margin)
            value = out.value
            if not np.isfinite(value):
                raise NonFiniteLossError(
                    f"loss became {value} at epoch {epoch} (saturated={out.saturated}, "
                    f"margin range [{margin.value.min():.3g}, {margin.value.max():.3g}])"
                )
            backward(tape, out.total)
            opt.step()
            opt.zero_grad()
            epoch_total += value
            saturated |= out.saturated
        trace.epoch_loss.append(epoch_total)
        trace.epoch_loss_mean.append(epoch_total / n)
        if saturated:
            trace.saturated_epochs.append(epoch)
        log.debug("epoch %d loss %.6g", epoch, epoch_total)
    return trace


def predict(model: DosaModel, features, rng) -> np.ndarray:
    return model.forward(features, rng).labels


@dataclass
class MllResult:
    model: DosaModel
    margin: object
    log: TrainLog
    report: object


def run_mll(train, test, hidden_layers, loss_cfg: LossConfig, train_cfg: TrainConfig,
            seed: int = 0, timesteps: int = 10) -> MllResult:
    """Train one DOSA model on all labels at once and score it on ``test``."""
    init_ss, train_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    cfg = DosaConfig(input_dim=train.m, num_labels=train.r, hidden_layers=tuple(hidden_layers),
                     timesteps=timesteps, seed=seed)
    model = init_weights(cfg, np.random.default_rng(init_ss))
    margin = make_margin(train.r, trainable=loss_cfg.margin_trainable)
    trace = train_model(model, margin, train.features, train.labels, loss_cfg, train_cfg,
                        np.random.default_rng(train_ss))
    pred = predict(model, test.features, np.random.default_rng(eval_ss))
    return MllResult(model, margin, trace, evaluate(test.labels, pred, test.label_names))
