# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import json
import math

import numpy as np
import pytest

from rlkd import _datasets as datasets
from rlkd._exceptions import (
    CoverageError,
    DatasetParseError,
    DatasetSchemaError,
    InvalidArgumentError,
    TeacherRowValidationError,
)
from rlkd._numerics import SeededRng

from .conftest import make_predictions


def _toy(n=6, name="toy"):
    return datasets.Dataset(
        ids=np.arange(10, 10 + n),
        features=np.arange(n * 2, dtype=np.float64).reshape(n, 2),
        labels=[(i % 2) + 1 for i in range(n)],
        num_classes=2,
        name=name,
        regions=[(i % 3) + 1 for i in range(n)],
    )


def test_dataset_properties():
    data = _toy()
    assert len(data) == 6
    assert data.feature_dim == 2
    assert 12 in data
    assert 99 not in data
    assert "12" not in data
    assert data.position(12) == 2
    assert repr(data) == "<Dataset name='toy' instances=6 num_classes=2 feature_dim=2>"

    instance = data[1]
    assert instance.id == 11
    assert instance.label == 2
    assert instance.region == 2
    assert np.array_equal(instance.features, [2.0, 3.0])


def test_dataset_is_read_only():
    data = _toy()
    with pytest.raises(ValueError):
        data.features[0, 0] = 1.0


def test_dataset_position_unknown():
    with pytest.raises(CoverageError, match="instance 99"):
        _toy().position(99)


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"ids": []}, "at least one instance"),
        ({"labels": [1, 2, 3, 1, 2, 1]}, r"labels must be in \[1, 2\]"),
        ({"labels": [0, 1, 2, 1, 2, 1]}, r"labels must be in \[1, 2\]"),
        ({"ids": [1, 1, 2, 3, 4, 5]}, "ids must be unique"),
        ({"num_classes": 1}, "num_classes must be at least 2"),
        ({"features": np.full((6, 2), np.nan)}, "non-finite"),
        ({"features": np.zeros((5, 2))}, "features must be"),
    ],
    ids=["empty", "label-too-large", "label-zero", "duplicate-ids", "one-class", "nan", "shape"],
)
def test_dataset_invalid(kwargs, match):
    base = {
        "ids": list(range(6)),
        "features": np.zeros((6, 2)),
        "labels": [1, 2, 1, 2, 1, 2],
        "num_classes": 2,
    }
    base.update(kwargs)
    with pytest.raises(DatasetSchemaError, match=match):
        datasets.Dataset(**base)


def test_dataset_equality_and_subset():
    data = _toy()
    sub = data.subset([0, 2], name="sub")
    assert sub.name == "sub"
    assert sub.ids.tolist() == [10, 12]
    assert sub.regions.tolist() == [1, 3]
    assert data == _toy()
    assert data != sub


def test_dataset_from_instances_mixed_regions():
    instances = [
        datasets.Instance(1, np.zeros(2), 1, 1),
        datasets.Instance(2, np.zeros(2), 2, None),
    ]
    with pytest.raises(DatasetSchemaError, match="every instance or none"):
        datasets.Dataset.from_instances(instances, 2)


def test_dataset_batches_in_order():
    batches = list(_toy().batches(4))
    assert [b.size for b in batches] == [4, 2]
    assert batches[0].ids.tolist() == [10, 11, 12, 13]


def test_dataset_batches_shuffled_cover_everything():
    data = _toy()
    batches = list(data.batches(4, SeededRng(1, "shuffle")))
    ids = np.concatenate([b.ids for b in batches])
    assert sorted(ids.tolist()) == data.ids.tolist()
    assert np.array_equal(ids, np.concatenate([b.ids for b in data.batches(4, SeededRng(1, "shuffle"))]))


def test_dataset_batches_invalid_size():
    with pytest.raises(InvalidArgumentError, match="batch_size"):
        list(_toy().batches(0))


def test_split_sizes_and_disjoint():
    train, dev, test = datasets.split(_toy(20), datasets.SplitSpec(0.6, 0.2, 0.2, seed=4))
    assert (len(train), len(dev), len(test)) == (12, 4, 4)
    all_ids = np.concatenate([train.ids, dev.ids, test.ids])
    assert sorted(all_ids.tolist()) == list(range(10, 30))
    assert train.name == "toy-train"


def test_split_reproducible():
    a = datasets.split(_toy(20), datasets.SplitSpec(seed=4))
    b = datasets.split(_toy(20), datasets.SplitSpec(seed=4))
    assert all(x == y for x, y in zip(a, b))


def test_split_spec_invalid():
    with pytest.raises(InvalidArgumentError, match="must sum to 1"):
        datasets.SplitSpec(0.5, 0.2, 0.2)


def test_split_too_small():
    with pytest.raises(InvalidArgumentError, match="gives sizes"):
        datasets.split(_toy(3), datasets.SplitSpec())


def test_standardize_uses_train_statistics():
    train = _toy()
    other = _toy(name="other").with_features(np.ones((6, 2)))
    std_train, std_other = datasets.standardize(train, other)
    assert np.allclose(std_train.features.mean(axis=0), 0.0)
    assert np.allclose(std_train.features.std(axis=0), 1.0)
    expected = (1.0 - train.features.mean(axis=0)) / train.features.std(axis=0)
    assert np.allclose(std_other.features, expected)


def test_quadrant_class_centers():
    centers = datasets.quadrant_class_centers(2, 4)
    assert centers.shape == (4, 2, 2)
    region_means = centers.mean(axis=1)
    assert np.allclose(np.linalg.norm(region_means, axis=1), datasets.REGION_RADIUS)
    assert np.allclose(np.linalg.norm(centers[0, 0] - centers[0, 1]), 2 * datasets.CLASS_OFFSET)
    assert not np.allclose(centers[0, 0] - region_means[0], centers[1, 0] - region_means[1])


def test_generate_quadrant_benchmark():
    train, dev, test = datasets.generate_quadrant_benchmark(seed=1, n_per_split=(80, 16, 24), feature_dim=5)
    assert (len(train), len(dev), len(test)) == (80, 16, 24)
    assert train.feature_dim == 5
    assert train.ids.tolist() == list(range(80))
    assert dev.ids[0] == 80
    assert test.ids[0] == 96
    assert np.bincount(train.regions)[1:].tolist() == [20, 20, 20, 20]
    assert np.bincount(train.labels)[1:].tolist() == [40, 40]
    assert np.allclose(train.features.mean(axis=0), 0.0)


def test_generate_quadrant_benchmark_reproducible():
    a = datasets.generate_quadrant_benchmark(seed=2, n_per_split=(40, 16, 16))
    b = datasets.generate_quadrant_benchmark(seed=2, n_per_split=(40, 16, 16))
    c = datasets.generate_quadrant_benchmark(seed=3, n_per_split=(40, 16, 16))
    assert a[0] == b[0]
    assert a[0] != c[0]


@pytest.mark.parametrize("label_noise", [0.1, 0.25], ids=["p10", "p25"])
def test_generate_quadrant_benchmark_label_noise(label_noise):
    clean = datasets.generate_quadrant_benchmark(seed=2, n_per_split=(8000, 16, 16))[0]
    noisy = datasets.generate_quadrant_benchmark(seed=2, n_per_split=(8000, 16, 16), label_noise=label_noise)[0]
    assert np.array_equal(clean.features, noisy.features)
    flipped = float(np.mean(clean.labels != noisy.labels))
    assert abs(flipped - label_noise) <= 0.02


@pytest.mark.parametrize("num_classes", [2, 3], ids=["c2", "c3"])
def test_generate_quadrant_benchmark_class_balance(num_classes):
    for split in datasets.generate_quadrant_benchmark(seed=4, num_classes=num_classes):
        frequencies = np.bincount(split.labels, minlength=num_classes + 1)[1:] / len(split)
        assert np.all(np.abs(frequencies - 1 / num_classes) <= 0.03)


def test_generate_quadrant_benchmark_region_rule_separates_classes():
    # nearest class center of the instance region on the two base features
    centers = datasets.quadrant_class_centers(2, 4)
    test = datasets.generate_quadrant_benchmark(seed=0, n_per_split=(8000, 2000, 2000), standardized=False)[2]
    region_centers = centers[test.regions - 1]
    distances = np.linalg.norm(test.features[:, None, :2] - region_centers, axis=-1)
    predicted = np.argmin(distances, axis=1) + 1
    assert np.mean(predicted == test.labels) > 0.97


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"num_classes": 1}, "num_classes"),
        ({"num_regions": 1}, "num_regions"),
        ({"label_noise": 1.0}, "label_noise"),
        ({"feature_dim": 1}, "feature_dim"),
        ({"n_per_split": (4, 16, 16)}, "n_per_split"),
    ],
    ids=["classes", "regions", "noise", "feature-dim", "too-few"],
)
def test_generate_quadrant_benchmark_invalid(kwargs, match):
    with pytest.raises(InvalidArgumentError, match=match):
        datasets.generate_quadrant_benchmark(seed=0, **kwargs)


def test_jsonl_save_load(tmp_path):
    data = _toy()
    path = tmp_path / "toy.jsonl"
    datasets.save_jsonl(data, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert json.loads(lines[0]) == {"num_classes": 2, "feature_dim": 2, "name": "toy"}
    assert json.loads(lines[1]) == {"id": 10, "features": [0.0, 1.0], "label": 1, "region": 1}
    assert datasets.load_jsonl(path) == data


def test_jsonl_load_without_regions(tmp_path):
    path = tmp_path / "plain.jsonl"
    path.write_text(
        '{"num_classes": 3, "feature_dim": 1, "name": "plain"}\n{"id": 1, "features": [0.5], "label": 3}\n',
        encoding="utf-8",
    )
    actual = datasets.load_jsonl(path)
    assert actual.regions is None
    assert actual.labels.tolist() == [3]


HEADER = '{"num_classes": 2, "feature_dim": 1, "name": "x"}\n'
RECORD = '{"id": 1, "features": [0.5], "label": 1}\n'


@pytest.mark.parametrize(
    "content, error, match",
    [
        ("", DatasetSchemaError, "non-empty"),
        (HEADER, DatasetSchemaError, "non-empty"),
        ('{"name": "x"}\n' + RECORD, DatasetSchemaError, "header"),
        (HEADER + '{"id": 1,\n', DatasetParseError, "line 2"),
        (HEADER + "[1]\n", DatasetParseError, "not a JSON object"),
        (HEADER + RECORD.replace('"label": 1', '"label": 3'), DatasetSchemaError, r"label must be .* in \[1, 2\]"),
        (HEADER.replace('"feature_dim": 1', '"feature_dim": 2') + RECORD, DatasetSchemaError, "must be 2 numbers"),
        (HEADER + RECORD.replace("}", ', "y": 1}'), DatasetSchemaError, "unknown fields"),
        (HEADER + RECORD + RECORD, DatasetSchemaError, "unique"),
    ],
    ids=["empty", "header-only", "no-header", "bad-json", "not-object", "label", "features", "unknown", "dup-ids"],
)
def test_jsonl_load_invalid(tmp_path, content, error, match):
    path = tmp_path / "bad.jsonl"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(error, match=match):
        datasets.load_jsonl(path)


def _write_rows(path, rows):
    with open(path, mode="w", encoding="utf-8") as fd:
        for row in rows:
            fd.write(json.dumps(row) + "\n")


def test_teacher_logits_load(tmp_path):
    data = _toy(2)
    path = tmp_path / "teachers.jsonl"
    _write_rows(
        path,
        [
            {"id": 10, "teacher": 1, "probs": [0.9, 0.1]},
            {"id": 10, "teacher": 2, "probs": [0.5, 0.5]},
            {"id": 11, "teacher": 1, "probs": [0.2, 0.8]},
            {"id": 11, "teacher": 2, "probs": [0.6, 0.4]},
            {"id": 500, "teacher": 1, "probs": [0.6, 0.4]},
        ],
    )
    actual = datasets.load_teacher_logits(path, data, 2)
    assert actual.ids.tolist() == [10, 11]
    assert np.allclose(actual.probabilities[0], [[0.9, 0.1], [0.5, 0.5]])
    assert np.array_equal(actual.soft_probabilities, actual.probabilities)
    assert actual.losses[0, 0] == pytest.approx(-math.log(0.9))
    assert actual.losses[1, 1] == pytest.approx(-math.log(0.4))


def test_teacher_logits_temperature(tmp_path):
    data = _toy(2)
    path = tmp_path / "teachers.jsonl"
    rows = [{"id": i, "teacher": 1, "probs": [0.8, 0.2]} for i in [10, 11]]
    _write_rows(path, rows)
    actual = datasets.load_teacher_logits(path, data, 1, temperature=2.0)
    expected = np.sqrt([0.8, 0.2]) / np.sqrt([0.8, 0.2]).sum()
    assert np.allclose(actual.soft_probabilities[0, 0], expected)
    assert actual.temperature == 2.0


@pytest.mark.parametrize(
    "rows, error, match",
    [
        ([{"id": 10, "teacher": 1, "probs": [0.9, 0.1]}], CoverageError, "teacher 2 for instance 10"),
        ([{"id": 10, "teacher": 3, "probs": [0.9, 0.1]}], TeacherRowValidationError, "teacher index"),
        ([{"id": 10, "teacher": 1, "probs": [0.9, 0.2]}], TeacherRowValidationError, "sum to"),
        ([{"id": 10, "teacher": 1, "probs": [1.5, -0.5]}], TeacherRowValidationError, r"\[0, 1\]"),
        ([{"id": 10, "teacher": 1, "probs": [1.0]}], TeacherRowValidationError, "2 numbers"),
        ([{"id": "10", "teacher": 1, "probs": [1.0, 0.0]}], DatasetParseError, "integers"),
        (
            [{"id": 10, "teacher": 1, "probs": [1.0, 0.0]}, {"id": 10, "teacher": 1, "probs": [1.0, 0.0]}],
            TeacherRowValidationError,
            "duplicate",
        ),
    ],
    ids=["missing", "teacher-range", "not-normalised", "out-of-range", "length", "id-type", "duplicate"],
)
def test_teacher_logits_invalid(tmp_path, rows, error, match):
    path = tmp_path / "teachers.jsonl"
    _write_rows(path, rows)
    with pytest.raises(error, match=match):
        datasets.load_teacher_logits(path, _toy(2), 2)


def test_teacher_logits_save_load(tmp_path):
    data = _toy(3)
    preds = make_predictions(
        [[[0.7, 0.3], [0.1, 0.9]], [[0.5, 0.5], [0.2, 0.8]], [[0.4, 0.6], [0.3, 0.7]]],
        data.labels,
        ids=data.ids,
    )
    path = tmp_path / "teachers.jsonl"
    datasets.save_teacher_logits(preds, path)
    actual = datasets.load_teacher_logits(path, data, 2)
    assert np.array_equal(actual.probabilities, preds.probabilities)
