# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import typing

import numpy as np

from rlkd._exceptions import CoverageError, InvalidArgumentError, TeacherRowValidationError
from rlkd._numerics import hard_cross_entropies


class TeacherPredictions:
    """Per-instance, per-teacher soft labels.

    Holds for every instance id and every teacher the probability row at the
    distillation temperature, the row at temperature 1 and the teacher's hard
    cross entropy loss computed from the temperature 1 row. Teachers are
    1-based in the public API but index the second array axis from 0.

    The object is immutable after construction and can be shared between
    threads.

    Args:
        ids: The instance ids, shape ``(N,)``.
        labels: The 1-based true labels of those instances, shape ``(N,)``.
        soft_probabilities: Rows at the distillation temperature, shape
            ``(N, K, C)``.
        probabilities: Rows at temperature 1, shape ``(N, K, C)``.
        temperature: The distillation temperature of ``soft_probabilities``.

    Attributes:
        losses: The per-teacher cross entropy losses, shape ``(N, K)``.
    """

    def __init__(
        self,
        ids: typing.Any,
        labels: typing.Any,
        soft_probabilities: typing.Any,
        probabilities: typing.Any,
        temperature: float,
    ) -> None:
        self.ids = np.asarray(ids, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.soft_probabilities = np.asarray(soft_probabilities, dtype=np.float64)
        self.probabilities = np.asarray(probabilities, dtype=np.float64)
        self.temperature = float(temperature)

        if self.probabilities.ndim != 3 or self.soft_probabilities.shape != self.probabilities.shape:
            raise InvalidArgumentError("probabilities", "must be (N, K, C) arrays of matching shape")

        if self.ids.shape != (self.probabilities.shape[0],) or self.labels.shape != self.ids.shape:
            raise InvalidArgumentError("ids", "ids and labels must have one entry per probability row")

        if self.num_teachers < 1:
            raise InvalidArgumentError("probabilities", "at least one teacher is required")

        if np.any((self.labels < 1) | (self.labels > self.num_classes)):
            raise InvalidArgumentError("labels", f"must be in [1, {self.num_classes}]")

        self._positions = {int(i): p for p, i in enumerate(self.ids)}
        if len(self._positions) != len(self.ids):
            raise InvalidArgumentError("ids", "instance ids must be unique")

        for name, rows in [("soft_probabilities", self.soft_probabilities), ("probabilities", self.probabilities)]:
            bad = ~np.isfinite(rows).all(axis=-1) | (np.abs(rows.sum(axis=-1) - 1.0) > 1e-6)
            if bad.any():
                pos, teacher = np.argwhere(bad)[0]
                raise TeacherRowValidationError(int(self.ids[pos]), int(teacher) + 1, f"{name} row is not normalised")

        n, k, _ = self.probabilities.shape
        self.losses = hard_cross_entropies(
            np.repeat(self.labels, k),
            self.probabilities.reshape(n * k, -1),
        ).reshape(n, k)

        for arr in [self.ids, self.labels, self.soft_probabilities, self.probabilities, self.losses]:
            arr.setflags(write=False)

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __repr__(self) -> str:
        return (
            f"<{type(self).__name__} instances={len(self)} num_teachers={self.num_teachers} "
            f"num_classes={self.num_classes} temperature={self.temperature}>"
        )

    @property
    def num_teachers(self) -> int:
        """The number of teachers K."""
        return int(self.probabilities.shape[1])

    @property
    def num_classes(self) -> int:
        """The number of classes C."""
        return int(self.probabilities.shape[2])

    def positions(
        self,
        ids: typing.Iterable[int],
    ) -> np.ndarray:
        """Map instance ids to row positions.

        Raises:
            CoverageError: An id has no predictions.
        """
        out = []
        for instance_id in ids:
            try:
                out.append(self._positions[int(instance_id)])
            except KeyError:
                raise CoverageError(int(instance_id)) from None

        return np.asarray(out, dtype=np.int64)

    def covers(
        self,
        instance_id: int,
    ) -> bool:
        return int(instance_id) in self._positions

    @classmethod
    def concatenate(
        cls,
        parts: typing.Sequence["TeacherPredictions"],
    ) -> "TeacherPredictions":
        """Merge predictions computed on disjoint sets of instances."""
        if not parts:
            raise InvalidArgumentError("parts", "at least one set of predictions is required")

        temperatures = {p.temperature for p in parts}
        if len(temperatures) != 1:
            raise InvalidArgumentError("parts", "predictions were computed at different temperatures")

        return cls(
            ids=np.concatenate([p.ids for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            soft_probabilities=np.concatenate([p.soft_probabilities for p in parts]),
            probabilities=np.concatenate([p.probabilities for p in parts]),
            temperature=parts[0].temperature,
        )


__all__ = [
    "TeacherPredictions",
]
