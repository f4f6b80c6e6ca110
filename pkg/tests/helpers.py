"""Synthetic ARFF fixtures shaped like the real benchmark files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# rough positive rates of the seven colour labels in the real flags data
FLAGS_RATES = (0.79, 0.47, 0.51, 0.47, 0.75, 0.27, 0.13)
FLAGS_LABELS = ("red", "green", "blue", "yellow", "white", "black", "orange")


def arff_text(relation, attributes, rows) -> str:
    """``attributes``: list of (name, type-string); rows: lists of tokens."""
    lines = [f"@relation {relation}", ""]
    lines += [f"@attribute {n} {t}" for n, t in attributes]
    lines += ["", "@data"]
    lines += [",".join(str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def flags_like_rows(n, seed):
    """19 features (4 nominal, 15 numeric) and 7 binary labels, all driven by a latent code."""
    r = np.random.default_rng(seed)
    z = r.normal(size=(n, 5))
    attrs = [("landmass", "{1,2,3,4,5,6}"), ("zone", "{1,2,3,4}"),
             ("language", "{1,2,3,4,5,6,7,8,9,10}"), ("religion", "{0,1,2,3,4,5,6,7}")]
    attrs += [(f"f{i}", "numeric") for i in range(15)]
    attrs += [(name, "{0,1}") for name in FLAGS_LABELS]
    proj = r.normal(size=(5, 15))
    numeric = np.round(z @ proj * 3 + 10, 0)
    label_proj = r.normal(size=(5, 7))
    score = z @ label_proj + 0.5 * r.normal(size=(n, 7))
    labels = np.zeros((n, 7), dtype=int)
    for k, rate in enumerate(FLAGS_RATES):
        labels[:, k] = score[:, k] > np.quantile(score[:, k], 1 - rate)
    rows = []
    for i in range(n):
        nom = [1 + int(abs(z[i, 0]) * 2) % 6, 1 + int(abs(z[i, 1]) * 2) % 4,
               1 + int(abs(z[i, 2]) * 3) % 10, int(abs(z[i, 3]) * 3) % 8]
        rows.append(nom + [int(v) for v in numeric[i]] + labels[i].tolist())
    return attrs, rows


def write_flags_like(root, seed=0, n_train=129, n_test=65) -> Path:
    """Write ``flags/flags-train.arff`` and ``flags/flags-test.arff`` under ``root``."""
    attrs, rows = flags_like_rows(n_train + n_test, seed)
    d = Path(root) / "flags"
    d.mkdir(parents=True, exist_ok=True)
    (d / "flags-train.arff").write_text(arff_text("flags", attrs, rows[:n_train]))
    (d / "flags-test.arff").write_text(arff_text("flags", attrs, rows[n_train:]))
    return d
