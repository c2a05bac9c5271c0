# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""Datasets and benchmarks.

Contains the immutable :class:`Dataset` container, the quadrant benchmark
generator, the JSON-lines dataset and teacher-logit file formats and the
seeded train/dev/test splitter. Class labels and region tags are 1-based
everywhere, including on disk.
"""

import dataclasses
import json
import logging
import math
import os
import typing

import numpy as np

from rlkd._exceptions import (
    CoverageError,
    DatasetParseError,
    DatasetSchemaError,
    InvalidArgumentError,
    TeacherRowValidationError,
)
from rlkd._numerics import PROBABILITY_FLOOR, SeededRng, softmax
from rlkd._predictions import TeacherPredictions

log = logging.getLogger(__name__)

PathType = typing.Union[str, "os.PathLike[str]"]

REGION_RADIUS = 4.0
CLASS_OFFSET = 1.0
CLUSTER_STD = 0.35


class Instance(typing.NamedTuple):
    """A single labeled example."""

    id: int  #: The unique instance id.
    features: np.ndarray  #: The feature vector of length d.
    label: int  #: The 1-based class label.
    region: typing.Optional[int]  #: The 1-based region tag, synthetic benchmarks only.


class Batch(typing.NamedTuple):
    """A mini-batch of instances in column form."""

    ids: np.ndarray  #: Instance ids, shape (n,).
    features: np.ndarray  #: Features, shape (n, d).
    labels: np.ndarray  #: 1-based labels, shape (n,).
    regions: typing.Optional[np.ndarray]  #: Region tags, shape (n,), if known.

    @property
    def size(self) -> int:
        return int(self.ids.shape[0])


class Dataset:
    """Labeled feature vectors.

    The constructor checks every invariant: ids are unique, features are a
    finite ``(N, d)`` matrix, labels lie in ``[1, C]`` and the dataset is not
    empty. The arrays are made read-only so a dataset can be shared freely.

    Args:
        ids: The unique instance ids.
        features: The feature matrix.
        labels: The 1-based labels.
        num_classes: The number of classes C.
        name: A descriptive name.
        regions: Optional 1-based region tags.
    """

    def __init__(
        self,
        ids: typing.Any,
        features: typing.Any,
        labels: typing.Any,
        num_classes: int,
        name: str = "dataset",
        regions: typing.Optional[typing.Any] = None,
    ) -> None:
        self.ids = np.array(ids, dtype=np.int64)
        self.features = np.array(features, dtype=np.float64)
        self.labels = np.array(labels, dtype=np.int64)
        self.regions = None if regions is None else np.array(regions, dtype=np.int64)
        self.num_classes = int(num_classes)
        self.name = name

        if self.ids.ndim != 1 or self.ids.shape[0] == 0:
            raise DatasetSchemaError(None, f"{name} must contain at least one instance")

        n = self.ids.shape[0]
        if self.features.ndim != 2 or self.features.shape[0] != n or self.features.shape[1] == 0:
            raise DatasetSchemaError(None, f"{name} features must be a non-empty ({n}, d) matrix")

        if not np.all(np.isfinite(self.features)):
            raise DatasetSchemaError(None, f"{name} features contain non-finite values")

        if self.labels.shape != (n,) or (self.regions is not None and self.regions.shape != (n,)):
            raise DatasetSchemaError(None, f"{name} labels and regions need one entry per instance")

        if self.num_classes < 2:
            raise DatasetSchemaError(None, f"num_classes must be at least 2, got {self.num_classes}")

        if np.any((self.labels < 1) | (self.labels > self.num_classes)):
            raise DatasetSchemaError(None, f"{name} labels must be in [1, {self.num_classes}]")

        self._positions = {int(i): p for p, i in enumerate(self.ids)}
        if len(self._positions) != n:
            raise DatasetSchemaError(None, f"{name} instance ids must be unique")

        for arr in [self.ids, self.features, self.labels, self.regions]:
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __contains__(
        self,
        instance_id: object,
    ) -> bool:
        return isinstance(instance_id, (int, np.integer)) and int(instance_id) in self._positions

    def __iter__(self) -> typing.Iterator[Instance]:
        for pos in range(len(self)):
            yield self[pos]

    def __getitem__(
        self,
        position: int,
    ) -> Instance:
        region = None if self.regions is None else int(self.regions[position])
        return Instance(int(self.ids[position]), self.features[position], int(self.labels[position]), region)

    def __eq__(
        self,
        other: object,
    ) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented

        regions_equal = (self.regions is None and other.regions is None) or (
            self.regions is not None and other.regions is not None and np.array_equal(self.regions, other.regions)
        )
        return (
            self.name == other.name
            and self.num_classes == other.num_classes
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and regions_equal
        )

    def __repr__(self) -> str:
        return (
            f"<{type(self).__name__} name={self.name!r} instances={len(self)} num_classes={self.num_classes} "
            f"feature_dim={self.feature_dim}>"
        )

    @property
    def feature_dim(self) -> int:
        """The feature dimension d."""
        return int(self.features.shape[1])

    @classmethod
    def from_instances(
        cls,
        instances: typing.Sequence[Instance],
        num_classes: int,
        name: str = "dataset",
    ) -> "Dataset":
        if not instances:
            raise DatasetSchemaError(None, f"{name} must contain at least one instance")

        tagged = [i.region is not None for i in instances]
        if any(tagged) and not all(tagged):
            raise DatasetSchemaError(None, f"{name} region tags must be set on every instance or none")

        return cls(
            ids=[i.id for i in instances],
            features=np.stack([np.asarray(i.features, dtype=np.float64) for i in instances]),
            labels=[i.label for i in instances],
            num_classes=num_classes,
            name=name,
            regions=[i.region for i in instances] if all(tagged) else None,
        )

    def position(
        self,
        instance_id: int,
    ) -> int:
        """The row position of an instance id."""
        try:
            return self._positions[int(instance_id)]
        except KeyError:
            raise CoverageError(int(instance_id)) from None

    def subset(
        self,
        positions: typing.Any,
        name: typing.Optional[str] = None,
    ) -> "Dataset":
        """A new dataset made of the rows at the given positions."""
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            ids=self.ids[positions],
            features=self.features[positions],
            labels=self.labels[positions],
            num_classes=self.num_classes,
            name=name or self.name,
            regions=None if self.regions is None else self.regions[positions],
        )

    def with_labels(
        self,
        labels: typing.Any,
        name: typing.Optional[str] = None,
    ) -> "Dataset":
        """A copy of the dataset with replaced labels."""
        return Dataset(self.ids, self.features, labels, self.num_classes, name or self.name, self.regions)

    def with_features(
        self,
        features: typing.Any,
        name: typing.Optional[str] = None,
    ) -> "Dataset":
        """A copy of the dataset with replaced features."""
        return Dataset(self.ids, features, self.labels, self.num_classes, name or self.name, self.regions)

    def as_batch(self) -> Batch:
        """The whole dataset as a single batch."""
        return Batch(self.ids, self.features, self.labels, self.regions)

    def batches(
        self,
        batch_size: int,
        rng: typing.Optional[SeededRng] = None,
    ) -> typing.Iterator[Batch]:
        """Iterate over mini-batches.

        Args:
            batch_size: The maximum batch size, the final batch may be smaller.
            rng: Shuffles the order when set, otherwise the stored order is
                used.
        """
        if batch_size < 1:
            raise InvalidArgumentError("batch_size", f"must be at least 1, got {batch_size}")

        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start : start + batch_size]
            yield Batch(
                self.ids[idx],
                self.features[idx],
                self.labels[idx],
                None if self.regions is None else self.regions[idx],
            )


@dataclasses.dataclass(frozen=True)
class SplitSpec:
    """Fractions and seed of a train/dev/test split."""

    train_fraction: float = 0.8
    dev_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        fractions = [self.train_fraction, self.dev_fraction, self.test_fraction]
        if any(f <= 0 for f in fractions):
            raise InvalidArgumentError("fractions", f"must all be positive, got {fractions}")

        if abs(sum(fractions) - 1.0) > 1e-9:
            raise InvalidArgumentError("fractions", f"must sum to 1, got {sum(fractions)}")


def split(
    dataset: Dataset,
    spec: SplitSpec,
) -> typing.Tuple[Dataset, Dataset, Dataset]:
    """Split a dataset into train, dev and test partitions.

    The ids are shuffled with the split seed and cut by the rounded fractions,
    the test split takes the remainder.

    Args:
        dataset: The dataset to split.
        spec: The fractions and seed.

    Returns:
        Tuple[Dataset, Dataset, Dataset]: The train, dev and test datasets.
    """
    n = len(dataset)
    n_train = int(round(n * spec.train_fraction))
    n_dev = int(round(n * spec.dev_fraction))
    n_test = n - n_train - n_dev
    if min(n_train, n_dev, n_test) < 1:
        raise InvalidArgumentError("spec", f"split of {n} instances gives sizes ({n_train}, {n_dev}, {n_test})")

    order = SeededRng(spec.seed, "split").permutation(n)
    cuts = [order[:n_train], order[n_train : n_train + n_dev], order[n_train + n_dev :]]
    train, dev, test = [
        dataset.subset(np.sort(c), f"{dataset.name}-{part}") for c, part in zip(cuts, ["train", "dev", "test"])
    ]
    log.debug("Split %s into %d/%d/%d instances", dataset.name, n_train, n_dev, n_test)

    return train, dev, test


def standardize(
    train: Dataset,
    *others: Dataset,
) -> typing.List[Dataset]:
    """Standardize features with the statistics of the train split.

    Args:
        train: The split the mean and standard deviation are taken from.
        others: Further splits transformed with the same statistics.

    Returns:
        List[Dataset]: The standardized train split followed by the others.
    """
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)

    return [d.with_features((d.features - mean) / std) for d in (train,) + others]


def quadrant_class_centers(
    num_classes: int,
    num_regions: int,
) -> np.ndarray:
    """Cluster centers of the quadrant benchmark.

    Regions sit on a circle of radius :data:`REGION_RADIUS`; inside region r
    the C class clusters sit on a circle of radius :data:`CLASS_OFFSET` that
    is rotated by ``pi * r / R`` so each region has its own class layout.

    Returns:
        np.ndarray: Centers of shape ``(R, C, 2)`` in raw feature space.
    """
    centers = np.empty((num_regions, num_classes, 2), dtype=np.float64)
    for r in range(num_regions):
        region_angle = 2 * math.pi * r / num_regions + math.pi / num_regions
        region_center = REGION_RADIUS * np.array([math.cos(region_angle), math.sin(region_angle)])
        for c in range(num_classes):
            angle = math.pi * r / num_regions + 2 * math.pi * c / num_classes
            centers[r, c] = region_center + CLASS_OFFSET * np.array([math.cos(angle), math.sin(angle)])

    return centers


def generate_quadrant_benchmark(
    seed: int,
    n_per_split: typing.Tuple[int, int, int] = (8000, 2000, 2000),
    num_classes: int = 2,
    num_regions: int = 4,
    label_noise: float = 0.0,
    feature_dim: int = 8,
    standardized: bool = True,
) -> typing.Tuple[Dataset, Dataset, Dataset]:
    """Generate the synthetic quadrant benchmark.

    Each instance gets a region and a class with every ``(class, region)``
    pair equally represented, two base features drawn from the Gaussian
    cluster of that pair and ``feature_dim - 2`` standard normal distractor
    features. With probability ``label_noise`` the label is then flipped to a
    different class chosen uniformly.

    Args:
        seed: The benchmark seed.
        n_per_split: The train, dev and test sizes.
        num_classes: The number of classes C.
        num_regions: The number of spatial regions R, 4 gives quadrants.
        label_noise: The label flip probability in [0, 1).
        feature_dim: The feature dimension d, at least 2.
        standardized: Standardize every split with train statistics.

    Returns:
        Tuple[Dataset, Dataset, Dataset]: The train, dev and test splits.
    """
    if num_classes < 2:
        raise InvalidArgumentError("num_classes", f"must be at least 2, got {num_classes}")

    if num_regions < 2:
        raise InvalidArgumentError("num_regions", f"must be at least 2, got {num_regions}")

    if not 0.0 <= label_noise < 1.0:
        raise InvalidArgumentError("label_noise", f"must be in [0, 1), got {label_noise}")

    if feature_dim < 2:
        raise InvalidArgumentError("feature_dim", f"must be at least 2, got {feature_dim}")

    if len(n_per_split) != 3 or min(n_per_split) < num_classes * num_regions:
        raise InvalidArgumentError(
            "n_per_split", f"every split needs at least C*R={num_classes * num_regions} instances, got {n_per_split}"
        )

    centers = quadrant_class_centers(num_classes, num_regions)
    rng = SeededRng(seed, "quadrant-benchmark")
    splits = []
    next_id = 0
    for part, n in zip(["train", "dev", "test"], n_per_split):
        part_rng = rng.child(part)
        combos = part_rng.permutation(np.arange(n) % (num_classes * num_regions))
        classes = combos % num_classes
        regions = combos // num_classes

        base = centers[regions, classes] + part_rng.normal(0.0, CLUSTER_STD, (n, 2))
        distractors = part_rng.normal(0.0, 1.0, (n, feature_dim - 2))
        features = np.concatenate([base, distractors], axis=1)

        flipped = part_rng.random(n) < label_noise
        shift = part_rng.integers(1, num_classes, n)
        labels = np.where(flipped, (classes + shift) % num_classes, classes) + 1

        splits.append(
            Dataset(
                ids=np.arange(next_id, next_id + n),
                features=features,
                labels=labels,
                num_classes=num_classes,
                name=f"quadrant-{part}",
                regions=regions + 1,
            )
        )
        log.debug("Generated %s with %d instances, %d flipped labels", part, n, int(flipped.sum()))
        next_id += n

    if standardized:
        splits = standardize(*splits)

    return splits[0], splits[1], splits[2]


def save_jsonl(
    dataset: Dataset,
    path: PathType,
) -> None:
    """Write a dataset as JSON-lines.

    The first line is the header ``{"num_classes", "feature_dim", "name"}``,
    every further line one instance. Floats are written with :func:`repr`
    precision so a load reproduces them exactly.
    """
    with open(path, mode="w", encoding="utf-8", newline="\n") as fd:
        header = {"num_classes": dataset.num_classes, "feature_dim": dataset.feature_dim, "name": dataset.name}
        fd.write(json.dumps(header) + "\n")
        for instance in dataset:
            record: typing.Dict[str, typing.Any] = {
                "id": instance.id,
                "features": [float(v) for v in instance.features],
                "label": instance.label,
            }
            if instance.region is not None:
                record["region"] = instance.region
            fd.write(json.dumps(record) + "\n")


def _read_json_lines(
    path: PathType,
) -> typing.Iterator[typing.Tuple[int, typing.Dict[str, typing.Any]]]:
    with open(path, mode="r", encoding="utf-8") as fd:
        for line_number, line in enumerate(fd, start=1):
            if not line.strip():
                continue

            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetParseError(str(path), line_number, e.msg) from e

            if not isinstance(record, dict):
                raise DatasetParseError(str(path), line_number, "record is not a JSON object")

            yield line_number, record


def _is_int(value: typing.Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def load_jsonl(
    path: PathType,
) -> Dataset:
    """Read a dataset written by :func:`save_jsonl`.

    Raises:
        DatasetParseError: A line is not a JSON object.
        DatasetSchemaError: The header is missing, a record is inconsistent
            with the header or the file holds no instances.
    """
    str_path = str(path)
    lines = _read_json_lines(path)
    try:
        _, header = next(lines)
    except StopIteration:
        raise DatasetSchemaError(str_path, "datasets must be non-empty") from None

    num_classes = header.get("num_classes")
    feature_dim = header.get("feature_dim")
    if not (_is_int(num_classes) and _is_int(feature_dim) and isinstance(header.get("name"), str)):
        raise DatasetSchemaError(str_path, "first line must be the num_classes/feature_dim/name header")

    instances = []
    for line_number, record in lines:
        unknown = set(record) - {"id", "features", "label", "region"}
        if unknown:
            raise DatasetSchemaError(str_path, f"line {line_number} has unknown fields {sorted(unknown)}")

        instance_id = record.get("id")
        features = record.get("features")
        label = record.get("label")
        region = record.get("region")
        if not _is_int(instance_id):
            raise DatasetSchemaError(str_path, f"line {line_number} id must be an integer")

        if not isinstance(features, list) or len(features) != feature_dim:
            raise DatasetSchemaError(str_path, f"line {line_number} features must be {feature_dim} numbers")

        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in features):
            raise DatasetSchemaError(str_path, f"line {line_number} features must be numbers")

        if not _is_int(label) or not 1 <= label <= num_classes:
            raise DatasetSchemaError(str_path, f"line {line_number} label must be an integer in [1, {num_classes}]")

        if region is not None and not _is_int(region):
            raise DatasetSchemaError(str_path, f"line {line_number} region must be an integer")

        instances.append(Instance(instance_id, np.asarray(features, dtype=np.float64), label, region))

    if not instances:
        raise DatasetSchemaError(str_path, "datasets must be non-empty")

    try:
        return Dataset.from_instances(instances, num_classes, header["name"])
    except DatasetSchemaError as e:
        raise DatasetSchemaError(str_path, e.reason) from e


def save_teacher_logits(
    predictions: TeacherPredictions,
    path: PathType,
) -> None:
    """Write the temperature 1 rows of teacher predictions as JSON-lines."""
    with open(path, mode="w", encoding="utf-8", newline="\n") as fd:
        for pos, instance_id in enumerate(predictions.ids):
            for k in range(predictions.num_teachers):
                record = {
                    "id": int(instance_id),
                    "teacher": k + 1,
                    "probs": [float(v) for v in predictions.probabilities[pos, k]],
                }
                fd.write(json.dumps(record) + "\n")


def load_teacher_logits(
    path: PathType,
    dataset: Dataset,
    num_teachers: int,
    temperature: float = 1.0,
) -> TeacherPredictions:
    """Read externally produced teacher probability rows.

    Each line is ``{"id", "teacher", "probs"}`` with a 1-based teacher index.
    Lines for ids outside the dataset are skipped so one file can serve every
    split. Rows at the distillation temperature are derived as
    ``softmax(log(p) / T)``, which equals softening the underlying logits.

    Args:
        path: The teacher-logit file.
        dataset: The instances the predictions must cover.
        num_teachers: The number of teachers K.
        temperature: The distillation temperature.

    Returns:
        TeacherPredictions: The validated rows with their CE losses.

    Raises:
        TeacherRowValidationError: A row is malformed or not a probability
            vector.
        CoverageError: An ``(id, teacher)`` pair of the dataset is missing.
    """
    if num_teachers < 1:
        raise InvalidArgumentError("num_teachers", f"must be at least 1, got {num_teachers}")

    num_classes = dataset.num_classes
    rows = np.full((len(dataset), num_teachers, num_classes), np.nan, dtype=np.float64)
    for line_number, record in _read_json_lines(path):
        instance_id = record.get("id")
        teacher = record.get("teacher")
        probs = record.get("probs")
        if not _is_int(instance_id) or not _is_int(teacher):
            raise DatasetParseError(str(path), line_number, "id and teacher must be integers")

        if instance_id not in dataset:
            continue

        if not 1 <= teacher <= num_teachers:
            raise TeacherRowValidationError(instance_id, teacher, f"teacher index must be in [1, {num_teachers}]")

        if not isinstance(probs, list) or len(probs) != num_classes:
            raise TeacherRowValidationError(instance_id, teacher, f"probs must hold {num_classes} numbers")

        try:
            row = np.asarray(probs, dtype=np.float64)
        except (TypeError, ValueError):
            raise TeacherRowValidationError(instance_id, teacher, "probs must be numbers") from None

        if not np.all(np.isfinite(row)) or np.any(row < 0.0) or np.any(row > 1.0):
            raise TeacherRowValidationError(instance_id, teacher, "entries must lie in [0, 1]")

        if abs(float(row.sum()) - 1.0) > 1e-6:
            raise TeacherRowValidationError(instance_id, teacher, f"entries sum to {float(row.sum())}, not 1")

        pos = dataset.position(instance_id)
        if not np.isnan(rows[pos, teacher - 1, 0]):
            raise TeacherRowValidationError(instance_id, teacher, "duplicate row")

        rows[pos, teacher - 1] = row

    missing = np.argwhere(np.isnan(rows[:, :, 0]))
    if missing.size:
        pos, k = missing[0]
        raise CoverageError(int(dataset.ids[pos]), int(k) + 1)

    soft_rows = softmax(np.log(np.maximum(rows, PROBABILITY_FLOOR)), temperature) if temperature != 1.0 else rows
    log.debug("Loaded %d teacher rows from %s", rows.shape[0] * rows.shape[1], path)

    return TeacherPredictions(dataset.ids, dataset.labels, soft_rows, rows, temperature)


__all__ = [
    "Batch",
    "Dataset",
    "Instance",
    "SplitSpec",
    "generate_quadrant_benchmark",
    "load_jsonl",
    "load_teacher_logits",
    "quadrant_class_centers",
    "save_jsonl",
    "save_teacher_logits",
    "split",
    "standardize",
]
