"""Aggregate result files into CSV tables and static SVG figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from dosa.errors import NothingToReportError

METRICS = ("micro", "macro", "weighted", "weighted_raw", "inverse_weighted", "most_imbalanced_f1")
SUMMARY_COLUMNS = ["dataset", "loss", "seed", "metric", "value", "arm", "mode", "config_hash",
                   "code_version"]
AGG_KEY = ("dataset", "mode", "loss", "arm", "config_hash", "code_version", "metric")


def collect(result_dir) -> list:
    """All run records below ``result_dir``, in a canonical order."""
    root = Path(result_dir)
    records = [json.loads(p.read_text()) for p in root.rglob("run_*.json")
               if not p.name.endswith(".ckpt.json")]
    if not records:
        raise NothingToReportError(f"no run_*.json files under {root}")
    return sorted(records, key=lambda r: (r["dataset"], r["mode"], r["loss"], r["arm"],
                                          r["config_hash"], r["seed"]))


def long_rows(records) -> list:
    rows = []
    for r in records:
        base = {"dataset": r["dataset"], "loss": r["loss"], "seed": r["seed"], "arm": r["arm"],
                "mode": r["mode"], "config_hash": r["config_hash"], "code_version": r["code_version"]}
        for m in METRICS:
            rows.append({**base, "metric": m, "value": r["report"][m]})
        for i, v in enumerate(r.get("combined") or []):
            rows.append({**base, "metric": f"combined_task{i + 1}", "value": v})
    return rows


def aggregate(rows) -> list:
    """Mean, population std and count per configuration and metric."""
    groups = {}
    for row in rows:
        key = tuple(row[k] for k in AGG_KEY)
        groups.setdefault(key, []).append((row["seed"], row["value"]))
    out = []
    for key in sorted(groups):
        vals = np.array([v for _, v in sorted(groups[key])], dtype=np.float64)
        out.append(dict(zip(AGG_KEY, key),
                        mean=float(vals.mean()), std=float(vals.std()), count=int(len(vals))))
    return out


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({c: row[c] for c in columns})


def _save(fig, path, records):
    hashes = ",".join(sorted({r["config_hash"] for r in records}))
    versions = ",".join(sorted({r["code_version"] for r in records}))
    fig.savefig(path, format="svg",
                metadata={"Description": f"config_hash={hashes}; code_version={versions}"})


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_task_bars(records, path) -> bool:
    cm = [r for r in records if r["mode"] == "cmll" and r.get("combined")]
    if not cm:
        return False
    plt = _figure()
    datasets = sorted({r["dataset"] for r in cm})
    fig, axes = plt.subplots(1, len(datasets), figsize=(4.5 * len(datasets), 3.5), squeeze=False)
    for ax, ds in zip(axes[0], datasets):
        losses = sorted({r["loss"] for r in cm if r["dataset"] == ds})
        width = 0.8 / len(losses)
        for j, loss in enumerate(losses):
            arr = np.array([r["combined"] for r in cm if r["dataset"] == ds and r["loss"] == loss])
            x = np.arange(arr.shape[1]) + j * width
            ax.bar(x, arr.mean(axis=0), width, yerr=arr.std(axis=0), label=loss, capsize=2)
        ax.set_title(ds)
        ax.set_xlabel("task")
        ax.set_ylabel("combined-mode macro F1")
        ax.set_xticks(np.arange(arr.shape[1]) + 0.4 - width / 2)
        ax.set_xticklabels([str(i + 1) for i in range(arr.shape[1])])
        ax.legend()
    fig.tight_layout()
    _save(fig, path, cm)
    plt.close(fig)
    return True


def plot_layer_ablation(records, path) -> bool:
    ab = [r for r in records if r["arm"].startswith("layers=")]
    if not ab:
        return False
    plt = _figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    counts = sorted({int(r["arm"].split("=")[1]) for r in ab})
    for m in ("micro", "macro", "weighted", "inverse_weighted"):
        means = [np.mean([r["report"][m] for r in ab if r["arm"] == f"layers={c}"]) for c in counts]
        ax.plot(counts, means, marker="o", label=m)
    ax.set_xlabel("hidden layers")
    ax.set_ylabel("F1")
    ax.set_xticks(counts)
    ax.legend()
    fig.tight_layout()
    _save(fig, path, ab)
    plt.close(fig)
    return True


def margin_pairs(records) -> dict:
    """Per dataset: mean normalised margin and normalised class proportion per class."""
    out = {}
    for ds in sorted({r["dataset"] for r in records}):
        rs = [r for r in records if r["dataset"] == ds and r["loss"] == "fmm" and r["arm"] in ("", "without_grad")]
        if not rs:
            continue
        margin = np.mean([r["normalized_margin"] for r in rs], axis=0)
        prop = np.mean([r["train_proportions"] for r in rs], axis=0)
        out[ds] = (margin / margin.sum(), prop / prop.sum() if prop.sum() > 0 else prop)
    return out


def plot_margins(records, path) -> bool:
    pairs = margin_pairs(records)
    if not pairs:
        return False
    plt = _figure()
    fig, axes = plt.subplots(1, len(pairs), figsize=(5 * len(pairs), 3.5), squeeze=False)
    for ax, (ds, (margin, prop)) in zip(axes[0], pairs.items()):
        x = np.arange(len(margin))
        ax.bar(x - 0.2, prop, 0.4, label="sample proportion")
        ax.bar(x + 0.2, margin, 0.4, label="normalised margin")
        ax.set_title(ds)
        ax.set_xlabel("class")
        ax.set_xticks(x)
        ax.legend()
    fig.tight_layout()
    _save(fig, path, records)
    plt.close(fig)
    return True


def build_report(result_dir) -> dict:
    """Write summary.csv, summary_agg.csv and plots/*.svg under ``result_dir``."""
    root = Path(result_dir)
    records = collect(root)
    rows = long_rows(records)
    _write_csv(root / "summary.csv", rows, SUMMARY_COLUMNS)
    agg = aggregate(rows)
    _write_csv(root / "summary_agg.csv", agg, list(AGG_KEY) + ["mean", "std", "count"])
    plots = root / "plots"
    plots.mkdir(exist_ok=True)
    made = []
    for name, fn in (("task_f1.svg", plot_task_bars), ("layer_ablation.svg", plot_layer_ablation),
                     ("margins.svg", plot_margins)):
        if fn(records, plots / name):
            made.append(str(plots / name))
    return {"runs": len(records), "summary": str(root / "summary.csv"),
            "aggregate": str(root / "summary_agg.csv"), "plots": made}
