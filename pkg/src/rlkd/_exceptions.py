# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import typing


class RLKDError(Exception):
    """Base error for any rlkd errors."""


class InvalidArgumentError(RLKDError, ValueError):
    """An argument does not satisfy the precondition of the operation."""

    def __init__(
        self,
        argument: str,
        reason: str,
    ) -> None:
        self.argument = argument
        self.reason = reason

    @property
    def message(self) -> str:
        return f"Invalid argument '{self.argument}': {self.reason}"

    def __str__(self) -> str:
        return self.message


class NumericError(RLKDError):
    """A computation produced a non-finite value."""

    def __init__(
        self,
        operation: str,
        detail: str,
    ) -> None:
        self.operation = operation
        self.detail = detail

    @property
    def message(self) -> str:
        return f"Non-finite value during {self.operation}: {self.detail}"

    def __str__(self) -> str:
        return self.message


class NumericDivergenceError(NumericError):
    """The training loss became non-finite."""

    def __init__(
        self,
        operation: str,
        epoch: int,
        batch: int,
    ) -> None:
        super().__init__(operation, f"loss diverged at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class DatasetParseError(RLKDError):
    """A line of a JSON-lines file could not be parsed."""

    def __init__(
        self,
        path: str,
        line_number: int,
        reason: str,
    ) -> None:
        self.path = path
        self.line_number = line_number
        self.reason = reason

    @property
    def message(self) -> str:
        return f"Failed to parse '{self.path}' line {self.line_number}: {self.reason}"

    def __str__(self) -> str:
        return self.message


class DatasetSchemaError(RLKDError):
    """A dataset file or dataset value violates the dataset schema."""

    def __init__(
        self,
        path: typing.Optional[str],
        reason: str,
    ) -> None:
        self.path = path
        self.reason = reason

    @property
    def message(self) -> str:
        source = f"'{self.path}'" if self.path else "dataset"
        return f"Schema violation in {source}: {self.reason}"

    def __str__(self) -> str:
        return self.message


class CoverageError(RLKDError):
    """Teacher predictions are missing for an instance or teacher."""

    def __init__(
        self,
        instance_id: int,
        teacher: typing.Optional[int] = None,
    ) -> None:
        self.instance_id = instance_id
        self.teacher = teacher

    @property
    def message(self) -> str:
        if self.teacher is None:
            return f"No teacher predictions for instance {self.instance_id}"

        return f"No prediction of teacher {self.teacher} for instance {self.instance_id}"

    def __str__(self) -> str:
        return self.message


class TeacherRowValidationError(RLKDError):
    """A teacher probability row is not a valid probability vector."""

    def __init__(
        self,
        instance_id: int,
        teacher: int,
        reason: str,
    ) -> None:
        self.instance_id = instance_id
        self.teacher = teacher
        self.reason = reason

    @property
    def message(self) -> str:
        return f"Invalid probability row of teacher {self.teacher} for instance {self.instance_id}: {self.reason}"

    def __str__(self) -> str:
        return self.message


class ConfigurationError(RLKDError):
    """An experiment configuration field is missing or invalid."""

    def __init__(
        self,
        field: str,
        reason: str,
    ) -> None:
        self.field = field
        self.reason = reason

    @property
    def message(self) -> str:
        return f"Configuration field '{self.field}' {self.reason}"

    def __str__(self) -> str:
        return self.message


class ExperimentRunError(RLKDError):
    """A single seeded run of an experiment failed."""

    def __init__(
        self,
        method: str,
        seed: int,
    ) -> None:
        self.method = method
        self.seed = seed

    @property
    def message(self) -> str:
        cause = f": {self.__cause__}" if self.__cause__ else ""
        return f"Run of method '{self.method}' with seed {self.seed} failed{cause}"

    def __str__(self) -> str:
        return self.message


class IncompatibleReportsError(RLKDError):
    """Two metrics reports cannot be compared."""

    def __init__(
        self,
        first: str,
        second: str,
        reason: str,
    ) -> None:
        self.first = first
        self.second = second
        self.reason = reason

    @property
    def message(self) -> str:
        return f"Reports '{self.first}' and '{self.second}' are incompatible: {self.reason}"

    def __str__(self) -> str:
        return self.message


class TraceFileError(RLKDError):
    """A run trace file is missing or unreadable."""

    def __init__(
        self,
        path: str,
        reason: str,
    ) -> None:
        self.path = path
        self.reason = reason

    @property
    def message(self) -> str:
        return f"Cannot read trace '{self.path}': {self.reason}"

    def __str__(self) -> str:
        return self.message
