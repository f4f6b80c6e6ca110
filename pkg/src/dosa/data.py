"""Multi-label datasets: ARFF/CSV ingestion, scaling, splitting and task sequences."""

from __future__ import annotations

import csv
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dosa.errors import (
    ArffParseError,
    ConfigError,
    ContractError,
    LabelDomainError,
    UnsupportedTypeError,
)

# Benchmark datasets: features, labels, MLL hidden layers x width,
# CMLL train samples per task, labels per task.
BENCHMARKS = {
    "plant": dict(features=440, labels=12, hidden=(20, 20, 20), samples=None, label_split=None),
    "virus": dict(features=440, labels=6, hidden=None, samples=[32, 60, 32], label_split=[2, 2, 2]),
    "emotions": dict(features=72, labels=6, hidden=(10, 10, 10), samples=None, label_split=None),
    "flags": dict(features=19, labels=7, hidden=(5, 5), samples=[43, 43, 43], label_split=[3, 2, 2]),
    "yeast": dict(features=103, labels=14, hidden=(10, 10, 10), samples=None, label_split=None),
    "foodtruck": dict(features=21, labels=12, hidden=(5, 5), samples=None, label_split=None),
    "scene": dict(features=294, labels=6, hidden=None, samples=[405, 403, 403], label_split=[2, 2, 2]),
    "gpositive": dict(features=440, labels=4, hidden=(20, 20, 20), samples=None, label_split=None),
    "gnegative": dict(features=440, labels=8, hidden=(20, 20, 20), samples=None, label_split=None),
    "human": dict(features=440, labels=14, hidden=(20, 20, 20),
                  samples=[310, 310, 310, 310, 622], label_split=[2, 2, 2, 2, 3]),
    "eukaryote": dict(features=440, labels=22, hidden=(20, 20, 20),
                      samples=[435, 530, 438, 465, 465, 465, 465, 465, 465, 465],
                      label_split=[2, 2, 2, 2, 2, 2, 2, 2, 2, 1]),
    "birds": dict(features=260, labels=19, hidden=(20, 20, 20), samples=None, label_split=None),
}


@dataclass
class MultiLabelDataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)
    label_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if self.features.ndim != 2 or labels.ndim != 2:
            raise ContractError("features and labels must be 2-D")
        if self.features.shape[0] != labels.shape[0]:
            raise ContractError(
                f"{self.features.shape[0]} feature rows but {labels.shape[0]} label rows"
            )
        if not np.all((labels == 1) | (labels == -1)):
            raise LabelDomainError("labels must be bipolar (-1/+1)")
        self.labels = labels.astype(np.int8)
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.m)]
        if not self.label_names:
            self.label_names = [f"y{j}" for j in range(self.r)]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    @property
    def r(self) -> int:
        return self.labels.shape[1]

    def subset(self, rows=None, label_cols=None, name=None) -> "MultiLabelDataset":
        rows = np.arange(self.n) if rows is None else np.asarray(rows, dtype=np.int64)
        cols = np.arange(self.r) if label_cols is None else np.asarray(label_cols, dtype=np.int64)
        return MultiLabelDataset(
            name or self.name,
            self.features[rows],
            self.labels[np.ix_(rows, cols)],
            list(self.feature_names),
            [self.label_names[c] for c in cols],
        )


# --------------------------------------------------------------------------
# ARFF
# --------------------------------------------------------------------------

_NUMERIC = {"numeric", "real", "integer"}


@dataclass
class ArffAttribute:
    name: str
    kind: str  # "numeric" or "nominal"
    values: tuple = ()


def _unquote(tok: str) -> str:
    tok = tok.strip()
    if len(tok) >= 2 and tok[0] == tok[-1] and tok[0] in "'\"":
        return tok[1:-1]
    return tok


def _split_name_and_type(rest: str, lineno: int):
    rest = rest.strip()
    if rest[:1] in "'\"":
        end = rest.find(rest[0], 1)
        if end < 0:
            raise ArffParseError("unterminated quoted attribute name", lineno)
        return rest[1:end], rest[end + 1:].strip()
    parts = rest.split(None, 1)
    if len(parts) != 2:
        raise ArffParseError("attribute declaration needs a name and a type", lineno)
    return parts[0], parts[1].strip()


def _parse_nominal(spec: str, lineno: int) -> tuple:
    if not spec.endswith("}"):
        raise ArffParseError("unterminated nominal value list", lineno)
    reader = csv.reader([spec[1:-1]], quotechar="'", skipinitialspace=True)
    return tuple(_unquote(v) for v in next(reader))


def parse_arff(text: str):
    """Parse a dense ARFF document.

    Returns ``(relation, attributes, rows, row_lines)`` where rows are lists
    of raw string tokens (``None`` for ``?``).
    """
    relation = ""
    attributes: list[ArffAttribute] = []
    rows, row_lines = [], []
    in_data = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if not in_data:
            low = line.lower()
            if low.startswith("@relation"):
                relation = _unquote(line[len("@relation"):])
            elif low.startswith("@attribute"):
                name, typ = _split_name_and_type(line[len("@attribute"):], lineno)
                tl = typ.lower()
                if tl in _NUMERIC:
                    attributes.append(ArffAttribute(name, "numeric"))
                elif typ.startswith("{"):
                    attributes.append(ArffAttribute(name, "nominal", _parse_nominal(typ, lineno)))
                else:
                    raise UnsupportedTypeError(f"line {lineno}: attribute {name!r} has unsupported type {typ!r}")
            elif low.startswith("@data"):
                if not attributes:
                    raise ArffParseError("@data before any @attribute", lineno)
                in_data = True
            else:
                raise ArffParseError(f"unexpected header line {line!r}", lineno)
            continue
        if line.startswith("{"):
            raise UnsupportedTypeError(f"line {lineno}: sparse ARFF rows are not supported")
        tokens = next(csv.reader([line], quotechar="'", skipinitialspace=True))
        if len(tokens) != len(attributes):
            raise ArffParseError(f"expected {len(attributes)} values, got {len(tokens)}", lineno)
        rows.append([None if t.strip() == "?" else _unquote(t) for t in tokens])
        row_lines.append(lineno)
    if not in_data:
        raise ArffParseError("no @data section found")
    return relation, attributes, rows, row_lines


def read_mulan_labels(xml_path) -> list:
    """Label names from a MULAN ``.xml`` label descriptor."""
    root = ET.parse(xml_path).getroot()
    return [el.attrib["name"] for el in root.iter() if el.tag.split("}")[-1] == "label"]


def _meka_label_count(relation: str):
    m = re.search(r"-C\s+(-?\d+)", relation)
    return int(m.group(1)) if m else None


def _label_columns(attributes, label_count, label_names, label_position, relation):
    names = [a.name for a in attributes]
    if label_names:
        missing = [n for n in label_names if n not in names]
        if missing:
            raise ConfigError(f"label attributes not found: {missing}")
        return [names.index(n) for n in label_names]
    if label_count is None:
        meka = _meka_label_count(relation)
        if meka is None:
            raise ConfigError("need label_count, label_names or a MULAN xml to identify labels")
        # MEKA: -C q means the first q attributes, -C -q the last q
        label_count, label_position = abs(meka), ("leading" if meka > 0 else "trailing")
    if not 0 < label_count < len(attributes):
        raise ConfigError(f"label_count {label_count} invalid for {len(attributes)} attributes")
    if label_position == "leading":
        return list(range(label_count))
    if label_position == "trailing":
        return list(range(len(attributes) - label_count, len(attributes)))
    raise ConfigError(f"label_position must be 'leading' or 'trailing', got {label_position!r}")


def _label_value(tok, attr, lineno):
    if tok in ("1", "1.0", "+1", "true", "yes"):
        return 1
    if tok in ("0", "0.0", "-1", "false", "no"):
        return -1
    if attr.kind == "nominal" and len(attr.values) == 2 and tok in attr.values:
        return 1 if attr.values.index(tok) == 1 else -1
    raise ArffParseError(f"label {attr.name!r} has non-binary value {tok!r}", lineno)


def impute_with_means(features: np.ndarray, means=None):
    """Replace NaNs column-wise by ``means`` (default: the column's own mean)."""
    x = np.array(features, dtype=np.float64, copy=True)
    if means is None:
        with np.errstate(all="ignore"):
            means = np.nanmean(np.where(np.isnan(x).all(axis=0), 0.0, x), axis=0)
    means = np.nan_to_num(np.asarray(means, dtype=np.float64))
    r, c = np.nonzero(np.isnan(x))
    x[r, c] = means[c]
    return x, means


def load_arff(path, label_count=None, label_names=None, label_position="trailing",
              xml=None, nominal="onehot", impute=True, name=None) -> MultiLabelDataset:
    """Load a MULAN/MEKA-style dense ARFF file.

    Labels are identified by explicit names, a MULAN xml file, a count of
    leading/trailing attributes, or the MEKA ``-C`` option in the relation.
    Nominal features become their value index (``nominal="integer"``) or, for
    more than two values, one-hot columns (``"onehot"``). ``?`` entries are
    filled with the column mean when ``impute`` is true, otherwise left NaN.
    """
    path = Path(path)
    relation, attrs, rows, row_lines = parse_arff(path.read_text(errors="replace"))
    if xml is not None:
        label_names = read_mulan_labels(xml)
    lcols = _label_columns(attrs, label_count, label_names, label_position, relation)
    fcols = [i for i in range(len(attrs)) if i not in set(lcols)]
    if nominal not in ("onehot", "integer"):
        raise ConfigError(f"nominal encoding must be 'onehot' or 'integer', got {nominal!r}")

    labels = np.empty((len(rows), len(lcols)), dtype=np.int8)
    for i, (row, ln) in enumerate(zip(rows, row_lines)):
        for j, c in enumerate(lcols):
            if row[c] is None:
                raise ArffParseError(f"missing value for label {attrs[c].name!r}", ln)
            labels[i, j] = _label_value(row[c], attrs[c], ln)

    columns, fnames = [], []
    for c in fcols:
        a = attrs[c]
        if a.kind == "numeric":
            col = np.empty(len(rows))
            for i, (row, ln) in enumerate(zip(rows, row_lines)):
                tok = row[c]
                try:
                    col[i] = np.nan if tok is None else float(tok)
                except ValueError:
                    raise ArffParseError(f"non-numeric value {tok!r} for {a.name!r}", ln) from None
            columns.append(col)
            fnames.append(a.name)
            continue
        idx = np.empty(len(rows))
        for i, (row, ln) in enumerate(zip(rows, row_lines)):
            tok = row[c]
            if tok is None:
                idx[i] = np.nan
            elif tok in a.values:
                idx[i] = a.values.index(tok)
            else:
                raise ArffParseError(f"value {tok!r} not declared for {a.name!r}", ln)
        if nominal == "integer" or len(a.values) <= 2:
            columns.append(idx)
            fnames.append(a.name)
        else:
            for k, v in enumerate(a.values):
                columns.append(np.where(np.isnan(idx), np.nan, (idx == k).astype(np.float64)))
                fnames.append(f"{a.name}={v}")
    features = np.column_stack(columns) if columns else np.zeros((len(rows), 0))
    if impute:
        features, _ = impute_with_means(features)
    return MultiLabelDataset(
        name or path.stem, features, labels, fnames, [attrs[c].name for c in lcols]
    )


# --------------------------------------------------------------------------
# CSV with JSON sidecar
# --------------------------------------------------------------------------


def load_csv(path, descriptor=None, impute=True) -> MultiLabelDataset:
    """CSV with a header row plus a sidecar ``{name, label_count, label_position}``.

    ``descriptor`` may be a dict, a path, or None (then ``<path>.json`` with
    the ``.csv`` suffix replaced is used).
    """
    path = Path(path)
    if descriptor is None:
        descriptor = path.with_suffix(".json")
    if not isinstance(descriptor, dict):
        descriptor = json.loads(Path(descriptor).read_text())
    q = int(descriptor["label_count"])
    position = descriptor.get("label_position", "trailing")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = [row for row in reader if row]
    width = len(header)
    if not 0 < q < width:
        raise ConfigError(f"label_count {q} invalid for {width} columns")
    lcols = list(range(q)) if position == "leading" else list(range(width - q, width))
    fcols = [c for c in range(width) if c not in set(lcols)]
    values = np.array([[np.nan if v.strip() in ("", "?") else float(v) for v in row] for row in body])
    raw_labels = values[:, lcols]
    if np.all(np.isin(raw_labels, (0.0, 1.0))):
        labels = np.where(raw_labels == 1.0, 1, -1)
    else:
        labels = raw_labels
    features = values[:, fcols]
    if impute:
        features, _ = impute_with_means(features)
    return MultiLabelDataset(
        descriptor.get("name", path.stem), features, labels,
        [header[c] for c in fcols], [header[c] for c in lcols],
    )


def write_normalized(dataset: MultiLabelDataset, path) -> Path:
    """Write ``<path>.csv`` (features then bipolar labels) and its JSON descriptor.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    path = Path(path).with_suffix(".csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(dataset.feature_names) + list(dataset.label_names))
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(v) for v in y])
    desc = {"name": dataset.name, "label_count": dataset.r, "label_position": "trailing"}
    path.with_suffix(".json").write_text(json.dumps(desc, indent=1))
    return path


def load_dataset(spec: dict, root=None) -> MultiLabelDataset:
    """Dispatch on file suffix; ``spec`` mirrors the ``dataset`` block of an experiment config."""
    p = Path(spec["path"])
    if root is not None and not p.is_absolute():
        p = Path(root) / p
    if p.suffix.lower() == ".arff":
        xml = spec.get("xml")
        if xml is not None and root is not None and not Path(xml).is_absolute():
            xml = Path(root) / xml
        return load_arff(p, label_count=spec.get("label_count"), label_names=spec.get("label_names"),
                         label_position=spec.get("label_position", "trailing"), xml=xml,
                         nominal=spec.get("nominal", "onehot"), impute=False, name=spec.get("name"))
    if p.suffix.lower() == ".csv":
        desc = spec.get("descriptor")
        if desc is None and "label_count" in spec:
            desc = {"name": spec.get("name", p.stem), "label_count": spec["label_count"],
                    "label_position": spec.get("label_position", "trailing")}
        return load_csv(p, desc, impute=False)
    raise ConfigError(f"unsupported dataset file {p}")


# --------------------------------------------------------------------------
# scaling and splits
# --------------------------------------------------------------------------


@dataclass
class FeatureScaler:
    minimum: np.ndarray
    maximum: np.ndarray

    def transform(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (x - self.minimum) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)


def fit_scaler(features) -> FeatureScaler:
    x = np.asarray(features, dtype=np.float64)
    return FeatureScaler(np.nanmin(x, axis=0), np.nanmax(x, axis=0))


def transform(scaler: FeatureScaler, features) -> np.ndarray:
    return scaler.transform(features)


def stratified_split(dataset: MultiLabelDataset, test_fraction=0.3, seed=0):
    """Train/test indices stratified by label cardinality (number of positives per row)."""
    rng = np.random.default_rng(seed)
    card = (dataset.labels == 1).sum(axis=1)
    train, test = [], []
    for c in np.unique(card):
        idx = np.flatnonzero(card == c)
        rng.shuffle(idx)
        n_test = int(round(len(idx) * test_fraction))
        test.extend(idx[:n_test].tolist())
        train.extend(idx[n_test:].tolist())
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def prepare_split(train: MultiLabelDataset, test: MultiLabelDataset):
    """Impute with train means and min-max scale with train statistics."""
    xtr, means = impute_with_means(train.features)
    xte, _ = impute_with_means(test.features, means)
    scaler = fit_scaler(xtr)
    tr = MultiLabelDataset(train.name, scaler.transform(xtr), train.labels,
                           train.feature_names, train.label_names)
    te = MultiLabelDataset(test.name, scaler.transform(xte), test.labels,
                           test.feature_names, test.label_names)
    return tr, te, scaler


# --------------------------------------------------------------------------
# task sequences
# --------------------------------------------------------------------------


@dataclass
class TaskSpec:
    task_index: int
    sample_indices: tuple
    label_indices: tuple

    def to_dict(self):
        return {"task_index": self.task_index, "sample_indices": list(self.sample_indices),
                "label_indices": list(self.label_indices)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["task_index"]), tuple(d["sample_indices"]), tuple(d["label_indices"]))


def _label_blocks(r, labels_per_task, seed=None, shuffle_labels=False):
    if any(c < 1 for c in labels_per_task) or sum(labels_per_task) != r:
        raise ConfigError(f"labels per task {list(labels_per_task)} must be positive and sum to {r}")
    order = np.arange(r)
    if shuffle_labels:
        order = np.random.default_rng(seed).permutation(r)
    bounds = np.cumsum([0] + list(labels_per_task))
    return [tuple(int(c) for c in order[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


def split_train_tasks(dataset, samples_per_task, labels_per_task, seed=0,
                      shuffle_labels=False) -> list:
    """Disjoint sample blocks (after a seeded shuffle) and disjoint label blocks, in order."""
    n = dataset.n if isinstance(dataset, MultiLabelDataset) else int(dataset[0])
    r = dataset.r if isinstance(dataset, MultiLabelDataset) else int(dataset[1])
    if len(samples_per_task) != len(labels_per_task):
        raise ConfigError("samples_per_task and labels_per_task differ in length")
    if any(c < 1 for c in samples_per_task) or sum(samples_per_task) > n:
        raise ConfigError(f"samples per task {list(samples_per_task)} exceed the {n} training samples")
    blocks = _label_blocks(r, labels_per_task, seed, shuffle_labels)
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + list(samples_per_task))
    return [
        TaskSpec(i, tuple(int(s) for s in perm[a:b]), blocks[i])
        for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))
    ]


def split_test_tasks(dataset, labels_per_task, seed=0, shuffle_labels=False) -> list:
    """Every test task holds all test samples; labels partitioned as in training."""
    n = dataset.n if isinstance(dataset, MultiLabelDataset) else int(dataset[0])
    r = dataset.r if isinstance(dataset, MultiLabelDataset) else int(dataset[1])
    blocks = _label_blocks(r, labels_per_task, seed, shuffle_labels)
    everything = tuple(range(n))
    return [TaskSpec(i, everything, b) for i, b in enumerate(blocks)]


@dataclass
class TaskValidation:
    ok: bool
    message: str = ""
    kind: str = ""
    indices: tuple = ()

    def __bool__(self):
        return self.ok


def validate_tasks(tasks, num_labels=None, samples_per_task=None, labels_per_task=None,
                   disjoint_samples=True) -> TaskValidation:
    """Check disjointness, coverage and count agreement; report the first violation."""
    seen_labels, seen_samples = {}, {}
    for t in tasks:
        for lab in t.label_indices:
            if lab in seen_labels:
                return TaskValidation(False, f"label {lab} appears in tasks {seen_labels[lab]} and "
                                             f"{t.task_index}", "label_overlap", (lab,))
            seen_labels[lab] = t.task_index
        if disjoint_samples:
            for s in t.sample_indices:
                if s in seen_samples:
                    return TaskValidation(False, f"sample {s} appears in tasks {seen_samples[s]} and "
                                                 f"{t.task_index}", "sample_overlap", (s,))
                seen_samples[s] = t.task_index
    if num_labels is not None:
        missing = sorted(set(range(num_labels)) - set(seen_labels))
        if missing:
            return TaskValidation(False, f"labels {missing} are not assigned to any task",
                                  "coverage", tuple(missing))
    if samples_per_task is not None:
        got = [len(t.sample_indices) for t in tasks]
        if got != list(samples_per_task):
            return TaskValidation(False, f"sample counts {got} != configured {list(samples_per_task)}",
                                  "sample_count")
    if labels_per_task is not None:
        got = [len(t.label_indices) for t in tasks]
        if got != list(labels_per_task):
            return TaskValidation(False, f"label counts {got} != configured {list(labels_per_task)}",
                                  "label_count")
    return TaskValidation(True)


def write_task_manifest(tasks, path, meta=None):
    doc = {"meta": meta or {}, "tasks": [t.to_dict() for t in tasks]}
    Path(path).write_text(json.dumps(doc, indent=1))


def read_task_manifest(path) -> list:
    doc = json.loads(Path(path).read_text())
    items = doc["tasks"] if isinstance(doc, dict) else doc
    return [TaskSpec.from_dict(d) for d in items]


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------


def make_imbalanced_multilabel(n=500, m=10, positive_rates=(0.05, 0.95), seed=0,
                               name="synthetic") -> MultiLabelDataset:
    """Linearly separable multi-label data with prescribed positive rates.

    Label k is positive where a random projection of the features exceeds
    its (1 - rate_k) quantile, so every label is exactly separable.
    """
    rng = np.random.default_rng(seed)
    x = rng.random((n, m))
    labels = np.empty((n, len(positive_rates)), dtype=np.int8)
    for k, rate in enumerate(positive_rates):
        w = rng.normal(size=m)
        score = x @ w
        n_pos = int(round(rate * n))
        order = np.argsort(-score, kind="stable")
        col = -np.ones(n, dtype=np.int8)
        col[order[:n_pos]] = 1
        labels[:, k] = col
    return MultiLabelDataset(name, x, labels)

