"""Experiment configuration: YAML on disk, validated dataclass in memory."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml

from dosa.errors import ConfigError

DATA_ROOT_ENV = "DOSA_DATA_ROOT"


def data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "data"))


@dataclass
class DatasetSpec:
    name: str
    path: str | None = None  # single file, split by label cardinality
    train: str | None = None  # predefined train/test files
    test: str | None = None
    xml: str | None = None
    label_count: int | None = None
    label_names: list | None = None
    label_position: str = "trailing"
    nominal: str = "onehot"
    test_fraction: float = 0.3
    split_seed: int = 0
    synthetic: dict | None = None


@dataclass
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    mode: str = "mll"
    hidden_layers: list = field(default_factory=list)
    timesteps: int = 10
    dt: float = 1.0
    loss: str = "fmm"
    clamp_floor: float = 0.001
    grad_through_importance: bool = False
    margin_trainable: bool | None = None
    mm_exponent: str = "sample"
    epochs: int = 100
    lr: float = 0.001
    batch_size: int | None = 32
    resample_encoding: bool = True
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    task_samples: list | None = None
    task_labels: list | None = None
    shuffle_labels: bool = False
    output: str = "results"
    arm: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Stable digest of everything that changes results (not seeds or output dir)."""
        d = self.to_dict()
        for k in ("seeds", "output", "name"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def replace(self, **changes) -> "ExperimentConfig":
        new = copy.deepcopy(self)
        for k, v in changes.items():
            if not hasattr(new, k):
                raise ConfigError(f"unknown config field {k!r}")
            setattr(new, k, v)
        return new


# nested YAML sections -> flat dataclass fields
_SECTIONS = {
    "model": {"hidden_layers": "hidden_layers", "timesteps": "timesteps", "dt": "dt"},
    "loss": {"variant": "loss", "clamp_floor": "clamp_floor",
             "grad_through_importance": "grad_through_importance",
             "margin_trainable": "margin_trainable", "mm_exponent": "mm_exponent"},
    "training": {"epochs": "epochs", "lr": "lr", "batch_size": "batch_size",
                 "resample_encoding": "resample_encoding"},
    "tasks": {"samples": "task_samples", "labels": "task_labels", "shuffle_labels": "shuffle_labels"},
}


def from_mapping(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    if "dataset" not in raw or not isinstance(raw["dataset"], dict):
        raise ConfigError("config needs a 'dataset' mapping")
    ds_fields = {f.name for f in fields(DatasetSpec)}
    unknown = set(raw["dataset"]) - ds_fields
    if unknown:
        raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
    kwargs = {"dataset": DatasetSpec(**raw.pop("dataset"))}
    for section, mapping in _SECTIONS.items():
        block = raw.pop(section, None) or {}
        if not isinstance(block, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in block.items():
            if key not in mapping:
                raise ConfigError(f"unknown key {section}.{key}")
            kwargs[mapping[key]] = value
    top = {f.name for f in fields(ExperimentConfig)}
    for key, value in raw.items():
        if key not in top:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = value
    kwargs.setdefault("name", kwargs["dataset"].name)
    cfg = ExperimentConfig(**kwargs)
    check_static(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        preset = preset_path(str(path))
        if preset is None:
            raise ConfigError(f"config file {path} not found")
        path = preset
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_mapping(raw)


def preset_path(name: str):
    """Resolve a shipped preset by bare name (``flags-mll``) or file name."""
    stem = name[:-5] if name.endswith(".yaml") else name
    res = resources.files("dosa") / "presets" / f"{stem}.yaml"
    return Path(str(res)) if res.is_file() else None


def list_presets() -> list:
    folder = resources.files("dosa") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def check_static(cfg: ExperimentConfig):
    """Checks that do not need the dataset on disk."""
    if cfg.mode not in ("mll", "cmll"):
        raise ConfigError(f"mode must be 'mll' or 'cmll', got {cfg.mode!r}")
    if cfg.loss not in ("mm", "fmm"):
        raise ConfigError(f"loss must be 'mm' or 'fmm', got {cfg.loss!r}")
    if cfg.epochs < 0 or cfg.lr <= 0 or cfg.timesteps < 1:
        raise ConfigError("epochs >= 0, lr > 0 and timesteps >= 1 are required")
    if cfg.batch_size is not None and cfg.batch_size < 1:
        raise ConfigError("batch_size must be positive or null (full batch)")
    if cfg.clamp_floor <= 0:
        raise ConfigError("clamp_floor must be positive")
    if any(int(h) < 1 for h in cfg.hidden_layers):
        raise ConfigError(f"hidden layer widths must be >= 1: {cfg.hidden_layers}")
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")
    if cfg.dataset.label_count is not None and cfg.dataset.label_count < 1:
        raise ConfigError("dataset must have at least one label")
    if cfg.mode == "cmll":
        if not cfg.task_samples or not cfg.task_labels:
            raise ConfigError("cmll mode needs tasks.samples and tasks.labels")
        if len(cfg.task_samples) != len(cfg.task_labels):
            raise ConfigError("tasks.samples and tasks.labels differ in length")
        if cfg.hidden_layers:
            raise ConfigError("cmll (SEA) mode uses no hidden layers")
    sources = [cfg.dataset.path, cfg.dataset.train, cfg.dataset.synthetic]
    if sum(s is not None for s in sources) != 1:
        raise ConfigError("dataset needs exactly one of path, train/test or synthetic")
    if cfg.dataset.train is not None and cfg.dataset.test is None:
        raise ConfigError("dataset.train given without dataset.test")


def check_against_data(cfg: ExperimentConfig, train, test):
    """Dimension checks once the data is loaded, before any training."""
    if train.r < 1:
        raise ConfigError("dataset has no labels")
    if train.m != test.m or train.r != test.r:
        raise ConfigError(f"train ({train.m} features, {train.r} labels) and test "
                          f"({test.m}, {test.r}) disagree")
    if cfg.mode == "cmll":
        if sum(cfg.task_labels) != train.r:
            raise ConfigError(f"tasks.labels sum to {sum(cfg.task_labels)}, dataset has {train.r} labels")
        if sum(cfg.task_samples) > train.n:
            raise ConfigError(f"tasks.samples need {sum(cfg.task_samples)} samples, "
                              f"training split has {train.n}")


def dump_yaml(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    out = {"name": d.pop("name"), "mode": d.pop("mode"), "dataset": {
        k: v for k, v in d.pop("dataset").items() if v is not None}}
    for section, mapping in _SECTIONS.items():
        out[section] = {key: d.pop(flat) for key, flat in mapping.items()}
    out.update(d)
    return yaml.safe_dump(out, sort_keys=False)
