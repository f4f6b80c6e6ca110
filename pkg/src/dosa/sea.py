"""Sequential learning with model adaptation (SEA) over a task sequence.

Per task: the previous model fills in the old labels of the new samples,
both heads grow by the task's label count (old columns copied, new ones
random), and the whole model is retrained on that task's samples only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dosa.data import MultiLabelDataset, TaskSpec, validate_tasks
from dosa.errors import ConfigError, StateError
from dosa.losses import LossConfig, extend_margin, make_margin
from dosa.metrics import combined_scores, evaluate
from dosa.model import DosaConfig, DosaModel, expand_heads, init_weights
from dosa.training import TrainConfig, TrainLog, predict, train_model


@dataclass
class SeaState:
    model: DosaModel | None
    margin: object | None
    seen_labels: list = field(default_factory=list)
    logs: list = field(default_factory=list)
    input_dim: int = 0
    timesteps: int = 10
    margin_trainable: bool = True

    @property
    def width(self) -> int:
        return 0 if self.model is None else self.model.num_labels


@dataclass
class AugmentedTask:
    features: np.ndarray
    labels: np.ndarray
    n_old: int


def augment_labels(prev_model, features, new_labels, rng, expected_old=None) -> AugmentedTask:
    """Old-label columns predicted by ``prev_model``; new-label columns are ground truth."""
    new_labels = np.asarray(new_labels, dtype=np.int8)
    if new_labels.ndim == 1:
        new_labels = new_labels[:, None]
    if prev_model is None:
        if expected_old:
            raise StateError(f"expected a model covering {expected_old} labels, got none")
        return AugmentedTask(np.asarray(features), new_labels.copy(), 0)
    if expected_old is not None and prev_model.num_labels != expected_old:
        raise StateError(f"previous model has {prev_model.num_labels} outputs, "
                         f"expected {expected_old}")
    old = predict(prev_model, features, rng)
    return AugmentedTask(np.asarray(features), np.concatenate([old, new_labels], axis=1),
                         old.shape[1])


def adapt(state: SeaState, new_label_count: int, rng, label_ids=None) -> SeaState:
    """Grow heads and margin by ``new_label_count``; returns a new state."""
    if new_label_count < 1:
        raise ConfigError("a task must introduce at least one label")
    if label_ids is None:
        start = len(state.seen_labels)
        label_ids = list(range(start, start + new_label_count))
    if state.model is None:
        cfg = DosaConfig(input_dim=state.input_dim, num_labels=new_label_count,
                         hidden_layers=(), timesteps=state.timesteps)
        model = init_weights(cfg, rng)
        margin = make_margin(new_label_count, trainable=state.margin_trainable)
    else:
        model = expand_heads(state.model, new_label_count, rng)
        margin = extend_margin(state.margin, new_label_count, 1.0)
    return SeaState(model, margin, list(state.seen_labels) + list(label_ids), list(state.logs),
                    state.input_dim, state.timesteps, state.margin_trainable)


def train_task(state: SeaState, features, labels, loss_cfg: LossConfig, train_cfg: TrainConfig,
               rng) -> tuple:
    labels = np.asarray(labels)
    if labels.shape[1] != state.width:
        raise StateError(f"labels have {labels.shape[1]} columns, model has {state.width}")
    trace = train_model(state.model, state.margin, features, labels, loss_cfg, train_cfg, rng)
    state.logs.append(trace)
    return state, trace


class TaskDataSource:
    """Hands out one task's training block at a time and counts every read."""

    def __init__(self, train: MultiLabelDataset, tasks):
        self._train = train
        self.tasks = list(tasks)
        self.reads = [0] * len(self.tasks)
        self.read_log = []

    def __len__(self):
        return len(self.tasks)

    def read(self, i: int):
        spec = self.tasks[i]
        self.reads[i] += 1
        self.read_log.append(i)
        rows = np.asarray(spec.sample_indices, dtype=np.int64)
        cols = np.asarray(spec.label_indices, dtype=np.int64)
        return self._train.features[rows].copy(), self._train.labels[np.ix_(rows, cols)].copy()


@dataclass
class SequenceResult:
    state: SeaState
    combined: list
    report: object
    logs: list
    task_widths: list


def run_sequence(source: TaskDataSource, test: MultiLabelDataset, test_tasks, loss_cfg: LossConfig,
                 train_cfg: TrainConfig, seed: int = 0, timesteps: int = 10,
                 on_adapt=None, on_task_end=None) -> SequenceResult:
    """Run SEA over ``source`` and score every prefix of tasks in combined mode.

    ``on_adapt(old_state, new_state, task_index)`` is called right after each
    head expansion, before training (used by invariant checks);
    ``on_task_end(state, task_index)`` after each task's training.
    """
    num_labels = test.r
    check = validate_tasks(source.tasks, num_labels=num_labels)
    if not check:
        raise ConfigError(f"invalid training tasks: {check.message}")
    check = validate_tasks(test_tasks, num_labels=num_labels, disjoint_samples=False)
    if not check:
        raise ConfigError(f"invalid test tasks: {check.message}")
    if [t.label_indices for t in test_tasks] != [t.label_indices for t in source.tasks]:
        raise ConfigError("test label partition differs from the training partition")

    streams = np.random.SeedSequence(seed).spawn(len(source) + 1)
    state = SeaState(None, None, [], [], test.m, timesteps, loss_cfg.margin_trainable)
    widths = []
    for i in range(len(source)):
        aug_rng, init_rng, train_rng = (np.random.default_rng(s) for s in streams[i].spawn(3))
        x, y_new = source.read(i)
        aug = augment_labels(state.model, x, y_new, aug_rng, expected_old=state.width)
        new_state = adapt(state, y_new.shape[1], init_rng, source.tasks[i].label_indices)
        if on_adapt is not None:
            on_adapt(state, new_state, i)
        state = new_state
        state, _ = train_task(state, aug.features, aug.labels, loss_cfg, train_cfg, train_rng)
        widths.append(state.width)
        if on_task_end is not None:
            on_task_end(state, i)
        del x, y_new, aug  # replay-free: nothing from this task survives the loop

    pred_seen = predict(state.model, test.features, np.random.default_rng(streams[-1]))
    pred = -np.ones_like(test.labels)
    pred[:, state.seen_labels] = pred_seen
    blocks = [list(t.label_indices) for t in test_tasks]
    return SequenceResult(
        state=state,
        combined=combined_scores(test.labels, pred, blocks),
        report=evaluate(test.labels, pred, test.label_names),
        logs=[t.to_dict() if isinstance(t, TrainLog) else t for t in state.logs],
        task_widths=widths,
    )
