"""Per-class F1 and its micro / macro / support-weighted / inverse-support-weighted averages."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from dosa.errors import DimensionError, LabelDomainError


@dataclass
class ClassCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    support: np.ndarray  # samples with y_k = +1
    n_samples: int

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    @property
    def proportions(self) -> np.ndarray:
        if self.n_samples == 0:
            return np.zeros(self.num_classes)
        return self.support / self.n_samples


def _bipolar(a, name):
    a = np.asarray(a)
    if a.ndim == 1:
        a = a[:, None]
    if not np.all((a == 1) | (a == -1)):
        raise LabelDomainError(f"{name} must contain only -1/+1")
    return a


def class_counts(y_true, y_pred) -> ClassCounts:
    t = _bipolar(y_true, "y_true")
    p = _bipolar(y_pred, "y_pred")
    if t.shape != p.shape:
        raise DimensionError(f"y_true {t.shape} and y_pred {p.shape} differ")
    tpos, ppos = t == 1, p == 1
    return ClassCounts(
        tp=np.sum(tpos & ppos, axis=0).astype(np.int64),
        fp=np.sum(~tpos & ppos, axis=0).astype(np.int64),
        fn=np.sum(tpos & ~ppos, axis=0).astype(np.int64),
        support=np.sum(tpos, axis=0).astype(np.int64),
        n_samples=t.shape[0],
    )


def _f1(tp, fp, fn):
    tp, fp, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, fn))
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)


def f1_per_class(counts: ClassCounts) -> np.ndarray:
    """2tp / (2tp + fp + fn); zero where the denominator vanishes."""
    return _f1(counts.tp, counts.fp, counts.fn)


def micro_f1(counts: ClassCounts) -> float:
    return float(_f1(counts.tp.sum(), counts.fp.sum(), counts.fn.sum()))


def macro_f1(counts: ClassCounts) -> float:
    return float(np.mean(f1_per_class(counts)))


def weighted_f1(counts: ClassCounts, normalize: bool = True) -> float:
    """Support-weighted mean sum(n_k F_k) / sum(n_k); ``normalize=False`` gives the bare sum."""
    n = counts.proportions
    f = f1_per_class(counts)
    raw = float(np.sum(n * f))
    if not normalize:
        return raw
    if n.sum() == 0:
        warnings.warn("no positive labels in any class; weighted F1 set to 0", stacklevel=2)
        return 0.0
    return raw / float(n.sum())


def inverse_weighted_f1(counts: ClassCounts) -> float:
    """sum(F_k / n_k) / sum(1 / n_k) over classes with at least one positive."""
    n = counts.proportions
    f = f1_per_class(counts)
    keep = n > 0
    if not keep.any():
        warnings.warn("no positive labels in any class; inverse-weighted F1 set to 0", stacklevel=2)
        return 0.0
    inv = 1.0 / n[keep]
    return float(np.sum(f[keep] * inv) / np.sum(inv))


def most_imbalanced_class(counts: ClassCounts) -> int:
    """Class with the fewest positives; lowest index on ties."""
    return int(np.argmin(counts.support))


@dataclass
class MetricReport:
    per_class_f1: list
    support: list
    proportions: list
    micro: float
    macro: float
    weighted: float
    weighted_raw: float
    inverse_weighted: float
    most_imbalanced_class: int
    most_imbalanced_f1: float
    label_names: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "label", "support", "proportion", "f1"])
            for k, f in enumerate(self.per_class_f1):
                name = self.label_names[k] if k < len(self.label_names) else str(k)
                w.writerow([k, name, self.support[k], self.proportions[k], f])


def evaluate(y_true, y_pred, label_names=None) -> MetricReport:
    counts = class_counts(y_true, y_pred)
    f = f1_per_class(counts)
    notes = []
    denom = 2 * counts.tp + counts.fp + counts.fn
    for k in np.flatnonzero(denom == 0):
        notes.append(f"class {int(k)}: no positives predicted or present; F1 set to 0")
    for k in np.flatnonzero(counts.support == 0):
        notes.append(f"class {int(k)}: no positive samples; excluded from inverse-weighted F1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fw = weighted_f1(counts)
        fiw = inverse_weighted_f1(counts)
    notes.extend(str(c.message) for c in caught)
    worst = most_imbalanced_class(counts)
    return MetricReport(
        per_class_f1=[float(v) for v in f],
        support=[int(v) for v in counts.support],
        proportions=[float(v) for v in counts.proportions],
        micro=micro_f1(counts),
        macro=macro_f1(counts),
        weighted=fw,
        weighted_raw=weighted_f1(counts, normalize=False),
        inverse_weighted=fiw,
        most_imbalanced_class=worst,
        most_imbalanced_f1=float(f[worst]),
        label_names=list(label_names) if label_names is not None else [],
        notes=notes,
    )


def combined_evaluation(y_true, y_pred, label_blocks, up_to: int) -> float:
    """Macro F1 over the labels of tasks 1..``up_to`` (1-based), on every test sample.

    ``label_blocks`` lists the column indices of each task's labels.
    """
    if not 1 <= up_to <= len(label_blocks):
        raise IndexError(f"task {up_to} out of range 1..{len(label_blocks)}")
    cols = [c for block in label_blocks[:up_to] for c in block]
    t = np.asarray(y_true)[:, cols]
    p = np.asarray(y_pred)[:, cols]
    return macro_f1(class_counts(t, p))


def combined_scores(y_true, y_pred, label_blocks) -> list:
    return [combined_evaluation(y_true, y_pred, label_blocks, i) for i in range(1, len(label_blocks) + 1)]
