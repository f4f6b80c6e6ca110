import numpy as np
import pytest

from dosa.data import (
    BENCHMARKS,
    MultiLabelDataset,
    TaskSpec,
    fit_scaler,
    impute_with_means,
    load_arff,
    load_csv,
    load_dataset,
    make_imbalanced_multilabel,
    parse_arff,
    prepare_split,
    read_task_manifest,
    split_test_tasks,
    split_train_tasks,
    stratified_split,
    transform,
    validate_tasks,
    write_normalized,
    write_task_manifest,
)
from dosa.errors import ArffParseError, ConfigError, LabelDomainError, UnsupportedTypeError

from helpers import arff_text, write_flags_like

SMALL = """% comment
@relation 'toy: -C -2'
@attribute a numeric
@attribute colour {red,green,blue}
@attribute flag {no,yes}
@attribute 'odd name' real
@attribute l1 {0,1}
@attribute l2 {0,1}
@data
1.5,red,no,2,1,0
?,blue,yes,4,0,0
3.5,green,yes,?,1,1
"""


def write(tmp_path, text, name="toy.arff"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_header_and_rows():
    relation, attrs, rows, lines = parse_arff(SMALL)
    assert relation == "toy: -C -2"
    assert [a.kind for a in attrs] == ["numeric", "nominal", "nominal", "numeric", "nominal", "nominal"]
    assert attrs[3].name == "odd name"
    assert rows[1][0] is None and lines == [10, 11, 12]


def test_load_onehot_and_impute(tmp_path):
    ds = load_arff(write(tmp_path, SMALL), label_count=2)
    assert ds.feature_names == ["a", "colour=red", "colour=green", "colour=blue", "flag", "odd name"]
    np.testing.assert_array_equal(ds.labels, [[1, -1], [-1, -1], [1, 1]])
    assert ds.features[1, 0] == 2.5 and ds.features[2, 5] == 3.0  # column means
    np.testing.assert_array_equal(ds.features[:, 4], [0, 1, 1])


def test_load_integer_nominals(tmp_path):
    ds = load_arff(write(tmp_path, SMALL), label_count=2, nominal="integer", impute=False)
    assert ds.m == 4
    np.testing.assert_array_equal(ds.features[:, 1], [0, 2, 1])
    assert np.isnan(ds.features[1, 0])


def test_meka_label_option(tmp_path):
    ds = load_arff(write(tmp_path, SMALL))
    assert ds.label_names == ["l1", "l2"]


def test_label_names_and_xml(tmp_path):
    ds = load_arff(write(tmp_path, SMALL), label_names=["l2"])
    assert ds.r == 1
    xml = tmp_path / "toy.xml"
    xml.write_text('<?xml version="1.0"?><labels xmlns="http://mulan.sourceforge.net/labels">'
                   '<label name="l1"></label><label name="l2"></label></labels>')
    ds = load_arff(write(tmp_path, SMALL), xml=xml)
    assert ds.label_names == ["l1", "l2"]


def test_leading_labels(tmp_path):
    text = arff_text("x", [("l", "{0,1}"), ("a", "numeric")], [[1, 0.5], [0, 0.25]])
    ds = load_arff(write(tmp_path, text), label_count=1, label_position="leading")
    np.testing.assert_array_equal(ds.labels[:, 0], [1, -1])
    np.testing.assert_array_equal(ds.features[:, 0], [0.5, 0.25])


@pytest.mark.parametrize("text,line", [
    ("@relation x\n@attribute a numeric\n@attribute l {0,1}\n@data\n1,0\n2\n", 6),
    ("@relation x\n@attribute a numeric\n@attribute l {0,1}\n@data\nabc,0\n", 5),
    ("@relation x\n@attribute a numeric\n@attribute l {0,1}\n@data\n1,7\n", 5),
    ("@relation x\n@attribute a {p,q\n", 2),
    ("@relation x\nbogus line\n", 2),
])
def test_parse_errors_carry_line_numbers(tmp_path, text, line):
    with pytest.raises(ArffParseError) as info:
        load_arff(write(tmp_path, text), label_count=1)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_unsupported_types(tmp_path):
    with pytest.raises(UnsupportedTypeError):
        parse_arff("@relation x\n@attribute s string\n@data\n")
    with pytest.raises(UnsupportedTypeError):
        parse_arff("@relation x\n@attribute a numeric\n@data\n{0 1}\n")


def test_label_identification_required(tmp_path):
    text = arff_text("x", [("a", "numeric"), ("l", "{0,1}")], [[1, 0]])
    with pytest.raises(ConfigError):
        load_arff(write(tmp_path, text))


def test_dataset_contract():
    with pytest.raises(LabelDomainError):
        MultiLabelDataset("x", np.zeros((2, 2)), np.array([[0], [1]]))


def test_csv_round_trip_bit_exact(tmp_path):
    r = np.random.default_rng(0)
    ds = MultiLabelDataset("rt", r.normal(size=(20, 6)) * 1e3, np.where(r.random((20, 3)) < 0.4, 1, -1))
    path = write_normalized(ds, tmp_path / "rt")
    back = load_csv(path)
    assert back.name == "rt"
    np.testing.assert_array_equal(back.features, ds.features)
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.feature_names == ds.feature_names and back.label_names == ds.label_names


def test_arff_to_csv_round_trip(tmp_path):
    ds = load_arff(write(tmp_path, SMALL), label_count=2)
    back = load_csv(write_normalized(ds, tmp_path / "n"))
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_csv_zero_one_labels(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b,y\n0.5,1,1\n0.25,2,0\n")
    ds = load_csv(p, {"label_count": 1})
    np.testing.assert_array_equal(ds.labels[:, 0], [1, -1])


def test_scaler_examples():
    s = fit_scaler(np.array([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]))
    np.testing.assert_array_equal(transform(s, [[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]), [[0, 0], [0.5, 0], [1, 0]])
    np.testing.assert_array_equal(transform(s, [[1.0, 9.0], [7.0, 1.0]]), [[0, 0], [1, 0]])


def test_prepare_split_ranges():
    r = np.random.default_rng(1)
    tr = MultiLabelDataset("a", r.normal(size=(30, 4)), np.where(r.random((30, 2)) < 0.5, 1, -1))
    te = MultiLabelDataset("a", r.normal(size=(10, 4)) * 3, np.where(r.random((10, 2)) < 0.5, 1, -1))
    tr.features[0, 0] = np.nan
    a, b, _ = prepare_split(tr, te)
    for x in (a.features, b.features):
        assert np.all((x >= 0) & (x <= 1))


def test_impute_uses_given_means():
    x, means = impute_with_means(np.array([[1.0, np.nan], [3.0, 4.0]]))
    np.testing.assert_array_equal(x, [[1, 4], [3, 4]])
    y, _ = impute_with_means(np.array([[np.nan, np.nan]]), means)
    np.testing.assert_array_equal(y, [[2, 4]])


def test_stratified_split():
    ds = make_imbalanced_multilabel(n=200, m=4, positive_rates=(0.2, 0.5), seed=0)
    tr, te = stratified_split(ds, 0.3, seed=3)
    assert len(set(tr) & set(te)) == 0 and len(tr) + len(te) == 200
    assert abs(len(te) - 60) <= 3
    tr2, _ = stratified_split(ds, 0.3, seed=3)
    np.testing.assert_array_equal(tr, tr2)


def test_flags_tasks():
    tasks = split_train_tasks((129, 7), [43, 43, 43], [3, 2, 2], seed=0)
    assert [len(t.sample_indices) for t in tasks] == [43, 43, 43]
    assert [t.label_indices for t in tasks] == [(0, 1, 2), (3, 4), (5, 6)]
    assert validate_tasks(tasks, 7, [43, 43, 43], [3, 2, 2])
    again = split_train_tasks((129, 7), [43, 43, 43], [3, 2, 2], seed=0)
    other = split_train_tasks((129, 7), [43, 43, 43], [3, 2, 2], seed=1)
    assert again == tasks
    assert other[0].sample_indices != tasks[0].sample_indices


def test_virus_tasks():
    tasks = split_train_tasks((145, 6), [32, 60, 32], [2, 2, 2], seed=0)
    assert validate_tasks(tasks, 6, [32, 60, 32], [2, 2, 2])
    test = split_test_tasks((62, 6), [2, 2, 2])
    assert all(t.sample_indices == tuple(range(62)) for t in test)
    assert [t.label_indices for t in test] == [t.label_indices for t in tasks]


def test_single_task_is_mll():
    (t,) = split_train_tasks((10, 3), [10], [3])
    assert sorted(t.sample_indices) == list(range(10)) and t.label_indices == (0, 1, 2)


def test_shuffled_labels_still_partition():
    tasks = split_train_tasks((20, 6), [5, 5, 5], [2, 2, 2], seed=4, shuffle_labels=True)
    assert sorted(c for t in tasks for c in t.label_indices) == list(range(6))


@pytest.mark.parametrize("samples,labels", [([50, 50, 50], [3, 2, 2]), ([43, 43, 43], [3, 2, 1]),
                                            ([43, 43], [3, 2, 2])])
def test_split_config_errors(samples, labels):
    with pytest.raises(ConfigError):
        split_train_tasks((129, 7), samples, labels)


def test_validate_reports_first_violation():
    bad = [TaskSpec(0, (0, 1), (0, 1)), TaskSpec(1, (2, 3), (1, 2))]
    v = validate_tasks(bad, 3)
    assert not v and v.kind == "label_overlap" and v.indices == (1,) and "label 1" in v.message
    gap = [TaskSpec(0, (0,), (0,)), TaskSpec(1, (1,), (2,))]
    v = validate_tasks(gap, 3)
    assert v.kind == "coverage" and v.indices == (1,)
    dup = [TaskSpec(0, (0, 1), (0,)), TaskSpec(1, (1,), (1,))]
    assert validate_tasks(dup).kind == "sample_overlap"
    assert validate_tasks(dup, disjoint_samples=False)
    assert validate_tasks([TaskSpec(0, (0,), (0,))], samples_per_task=[2]).kind == "sample_count"


def test_manifest_round_trip(tmp_path):
    tasks = split_train_tasks((20, 4), [5, 5], [2, 2], seed=2)
    write_task_manifest(tasks, tmp_path / "m.json", {"config_hash": "x"})
    assert read_task_manifest(tmp_path / "m.json") == tasks


def test_synthetic_rates_and_separability():
    ds = make_imbalanced_multilabel(n=500, m=10, positive_rates=(0.05, 0.95), seed=0)
    assert (ds.n, ds.m, ds.r) == (500, 10, 2)
    np.testing.assert_array_equal((ds.labels == 1).sum(axis=0), [25, 475])
    assert np.all((ds.features >= 0) & (ds.features <= 1))
    from scipy.optimize import linprog

    for k in range(2):
        # strict separability: find w, c with y (w.x - c) >= 1
        y = ds.labels[:, k].astype(float)
        A = -y[:, None] * np.hstack([ds.features, -np.ones((500, 1))])
        res = linprog(np.zeros(11), A_ub=A, b_ub=-np.ones(500), bounds=[(None, None)] * 11)
        assert res.status == 0


def test_benchmark_rows():
    assert BENCHMARKS["flags"]["features"] == 19 and BENCHMARKS["flags"]["labels"] == 7
    assert BENCHMARKS["scene"]["features"] == 294 and BENCHMARKS["scene"]["labels"] == 6
    for row in BENCHMARKS.values():
        if row["label_split"] is not None:
            assert len(row["samples"]) == len(row["label_split"])
    # printed splits for these two cover fewer labels than the datasets have
    assert sum(BENCHMARKS["human"]["label_split"]) == 11 and BENCHMARKS["human"]["labels"] == 14
    assert sum(BENCHMARKS["eukaryote"]["label_split"]) == 19 and BENCHMARKS["eukaryote"]["labels"] == 22


def test_flags_shaped_fixture_dimensions(tmp_path):
    write_flags_like(tmp_path)
    spec = {"name": "flags", "label_count": 7, "nominal": "integer"}
    tr = load_dataset({**spec, "path": "flags/flags-train.arff"}, tmp_path)
    te = load_dataset({**spec, "path": "flags/flags-test.arff"}, tmp_path)
    assert (tr.n + te.n, tr.m, tr.r) == (194, 19, 7)
    onehot = load_dataset({"name": "flags", "label_count": 7, "path": "flags/flags-train.arff"}, tmp_path)
    assert onehot.m == 15 + 6 + 4 + 10 + 8
