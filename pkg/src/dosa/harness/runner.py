"""Executes experiment configs and writes per-seed result files."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from dosa import __version__, kernels
from dosa.data import (
    load_dataset,
    make_imbalanced_multilabel,
    prepare_split,
    split_test_tasks,
    split_train_tasks,
    stratified_split,
    write_task_manifest,
)
from dosa.errors import ConfigError
from dosa.harness.config import ExperimentConfig, check_against_data, data_root
from dosa.losses import LossConfig, normalized_margins
from dosa.model import save_checkpoint
from dosa.sea import TaskDataSource, run_sequence
from dosa.training import TrainConfig, run_mll

log = logging.getLogger(__name__)


def load_splits(cfg: ExperimentConfig, root=None):
    """Load, split, impute and scale the configured dataset."""
    ds = cfg.dataset
    root = data_root() if root is None else Path(root)
    if ds.synthetic is not None:
        full = make_imbalanced_multilabel(name=ds.name, **ds.synthetic)
        tr_idx, te_idx = stratified_split(full, ds.test_fraction, ds.split_seed)
        train, test = full.subset(tr_idx), full.subset(te_idx)
    else:
        common = {k: getattr(ds, k) for k in ("name", "xml", "label_count", "label_names",
                                              "label_position", "nominal")}
        if ds.train is not None:
            train = load_dataset({**common, "path": ds.train}, root)
            test = load_dataset({**common, "path": ds.test}, root)
            if train.feature_names != test.feature_names:
                raise ConfigError("train and test files declare different features")
        else:
            full = load_dataset({**common, "path": ds.path}, root)
            tr_idx, te_idx = stratified_split(full, ds.test_fraction, ds.split_seed)
            train, test = full.subset(tr_idx), full.subset(te_idx)
    check_against_data(cfg, train, test)
    train, test, _ = prepare_split(train, test)
    return train, test


def loss_config(cfg: ExperimentConfig) -> LossConfig:
    return LossConfig(variant=cfg.loss, importance_clamp_floor=cfg.clamp_floor,
                      grad_through_importance=cfg.grad_through_importance,
                      margin_trainable=cfg.margin_trainable, mm_exponent=cfg.mm_exponent)


def train_config(cfg: ExperimentConfig, full_batch=False) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, lr=cfg.lr,
                       batch_size=None if full_batch else cfg.batch_size,
                       resample_encoding=cfg.resample_encoding)


def _proportions(labels) -> list:
    support = (np.asarray(labels) == 1).sum(axis=0).astype(np.float64)
    total = support.sum()
    return (support / total if total > 0 else support).tolist()


def run_one(cfg: ExperimentConfig, seed: int, out_dir=None, splits=None) -> dict:
    """Train and evaluate one (config, seed); returns the result record.

    Everything except ``wall_clock_s`` is a deterministic function of
    (config, seed).
    """
    t0 = time.perf_counter()
    train, test = splits if splits is not None else load_splits(cfg)
    chash = cfg.config_hash()
    lcfg = loss_config(cfg)
    record = {
        "config_hash": chash,
        "code_version": __version__,
        "config": cfg.to_dict(),
        "dataset": cfg.dataset.name,
        "mode": cfg.mode,
        "loss": cfg.loss,
        "arm": cfg.arm,
        "seed": int(seed),
        "kernel_backend": kernels.get_backend(),
        "train_proportions": _proportions(train.labels),
        "label_names": list(train.label_names),
    }
    if cfg.mode == "mll":
        res = run_mll(train, test, cfg.hidden_layers, lcfg, train_config(cfg), seed, cfg.timesteps)
        record.update(
            loss_trace=res.log.epoch_loss,
            loss_trace_mean=res.log.epoch_loss_mean,
            saturated_epochs=res.log.saturated_epochs,
            report=res.report.to_dict(),
            margin=res.margin.value[0].tolist(),
            normalized_margin=normalized_margins(res.margin).tolist(),
        )
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / f"run_{seed}.ckpt.json", res.model, res.margin, [seed],
                            {"config_hash": chash, "code_version": __version__})
    else:
        tasks = split_train_tasks(train, cfg.task_samples, cfg.task_labels, seed, cfg.shuffle_labels)
        test_tasks = split_test_tasks(test, cfg.task_labels, seed, cfg.shuffle_labels)
        on_task_end = None
        if out_dir is not None:
            write_task_manifest(tasks, Path(out_dir) / f"tasks_{seed}.json",
                                {"config_hash": chash, "code_version": __version__, "seed": int(seed)})

            def on_task_end(state, i):
                save_checkpoint(Path(out_dir) / f"run_{seed}_task{i + 1}.ckpt.json", state.model,
                                state.margin, [seed, i], {"config_hash": chash, "task": i + 1,
                                                          "code_version": __version__})

        # full batch per task in SEA mode
        res = run_sequence(TaskDataSource(train, tasks), test, test_tasks, lcfg,
                           train_config(cfg, full_batch=True), seed, cfg.timesteps,
                           on_task_end=on_task_end)
        record.update(
            loss_trace=[lg["epoch_loss"] for lg in res.logs],
            loss_trace_mean=[lg["epoch_loss_mean"] for lg in res.logs],
            saturated_epochs=[lg["saturated_epochs"] for lg in res.logs],
            report=res.report.to_dict(),
            combined=res.combined,
            task_widths=res.task_widths,
            label_blocks=[list(t.label_indices) for t in tasks],
            margin=res.state.margin.value[0].tolist(),
            normalized_margin=normalized_margins(res.state.margin).tolist(),
            seen_labels=list(res.state.seen_labels),
        )
        if out_dir is not None:
            manifest = {
                "config_hash": chash, "code_version": __version__, "seed": int(seed),
                "task_order": [t.task_index + 1 for t in tasks],
                "label_blocks": record["label_blocks"],
                "samples_per_task": [len(t.sample_indices) for t in tasks],
                "combined_macro_f1": res.combined, "report": record["report"],
            }
            (Path(out_dir) / f"sequence_{seed}.json").write_text(json.dumps(manifest, indent=1))
    record["wall_clock_s"] = time.perf_counter() - t0
    return record


def result_dir(cfg: ExperimentConfig, out=None) -> Path:
    return Path(out if out is not None else cfg.output) / cfg.config_hash()


def write_record(record: dict, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"run_{record['seed']}.json"
    path.write_text(json.dumps(record, indent=1, sort_keys=True))
    return path


def _job(args):
    cfg, seed, out = args
    d = result_dir(cfg, out)
    d.mkdir(parents=True, exist_ok=True)
    return str(write_record(run_one(cfg, seed, d), d))


def run_experiment(cfg: ExperimentConfig, seeds=None, out=None, jobs: int = 1) -> list:
    """Run every seed; returns the result file paths in seed order."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    load_splits(cfg)  # validate before any training
    d = result_dir(cfg, out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(json.dumps(
        {"config_hash": cfg.config_hash(), "code_version": __version__, "config": cfg.to_dict()},
        indent=1, sort_keys=True))
    work = [(cfg, s, out) for s in seeds]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return [Path(p) for p in pool.map(_job, work)]
    return [Path(_job(w)) for w in work]


_METRICS = ("micro", "macro", "weighted", "inverse_weighted")


def _mean_table(records):
    rows, hashes = {}, {}
    for rec in records:
        rows.setdefault(rec["arm"], []).append(rec["report"])
        hashes[rec["arm"]] = rec["config_hash"]
    table = []
    for arm, reports in rows.items():
        row = {"arm": arm, "runs": len(reports), "config_hash": hashes[arm], "code_version": __version__}
        for m in _METRICS:
            vals = np.array([r[m] for r in reports])
            row[m] = float(np.mean(vals))
            row[f"{m}_median"] = float(np.median(vals))
        table.append(row)
    return table


def _write_table(path: Path, table):
    import csv

    if not table:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]))
        w.writeheader()
        w.writerows(table)


def ablate_layers(cfg: ExperimentConfig, layer_counts, out=None, seeds=None, jobs=1):
    """One MLL run set per hidden-layer count, width taken from the config."""
    if cfg.mode != "mll":
        raise ConfigError("layer ablation needs mode: mll")
    counts = [int(c) for c in layer_counts]
    if not counts or any(c < 0 for c in counts):
        raise ConfigError("give at least one non-negative layer count")
    width = int(cfg.hidden_layers[0]) if cfg.hidden_layers else 20
    records = []
    for c in counts:
        arm = cfg.replace(hidden_layers=[width] * c, arm=f"layers={c}")
        for p in run_experiment(arm, seeds, out, jobs):
            records.append(json.loads(Path(p).read_text()))
    table = [dict(layers=int(r["arm"].split("=")[1]), **r) for r in _mean_table(records)]
    base = Path(out if out is not None else cfg.output)
    _write_table(base / f"ablation_layers_{cfg.dataset.name}.csv", table)
    return table


def ablate_gradflow(cfg: ExperimentConfig, out=None, seeds=None, jobs=1):
    """Paired runs with and without gradient flow through the importance factor."""
    if cfg.loss != "fmm":
        raise ConfigError("gradient-flow ablation needs loss: fmm")
    records = []
    for flag in (True, False):
        arm = cfg.replace(grad_through_importance=flag, arm="with_grad" if flag else "without_grad")
        for p in run_experiment(arm, seeds, out, jobs):
            records.append(json.loads(Path(p).read_text()))
    table = _mean_table(records)
    base = Path(out if out is not None else cfg.output)
    _write_table(base / f"ablation_gradflow_{cfg.dataset.name}.csv", table)
    return table
