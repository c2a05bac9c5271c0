# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""Dense numeric kernels.

Contains the softmax family, the hard and soft cross-entropy losses, the
seeded random generator used by every stochastic component and a central
difference gradient checker. Everything here works on 64-bit floats.
"""

import hashlib
import typing

import numpy as np
from scipy.special import expit

from rlkd._exceptions import InvalidArgumentError, NumericError

PROBABILITY_FLOOR = 1e-12
"""Probabilities are clamped to this value before any log is taken."""

GRADIENT_ERROR_FLOOR = 1e-8
"""Smallest denominator of the relative error in :func:`check_gradient`."""

RealArray = np.ndarray


def as_real_array(
    values: typing.Any,
    name: str = "values",
) -> RealArray:
    """Convert values to a finite float64 array.

    Args:
        values: Any array-like of real numbers.
        name: The argument name used in the error message.

    Returns:
        np.ndarray: The values as a float64 array.

    Raises:
        InvalidArgumentError: The input is empty or contains NaN/Inf.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0 or (arr.ndim > 0 and arr.shape[-1] == 0):
        raise InvalidArgumentError(name, "must not be empty")

    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(name, "contains a non-finite entry")

    return arr


def softmax(
    logits: typing.Any,
    temperature: float = 1.0,
) -> RealArray:
    """Temperature softmax.

    Computes ``exp(z_c / T) / sum_c' exp(z_c' / T)`` along the last axis using
    max subtraction, so the input may be a single logit vector or a batch of
    them.

    Args:
        logits: The logits, shape ``(..., C)``.
        temperature: The softening temperature, must be positive.

    Returns:
        np.ndarray: Probabilities with the same shape as logits.
    """
    if not (np.isfinite(temperature) and temperature > 0):
        raise InvalidArgumentError("temperature", f"must be a positive real, got {temperature}")

    z = as_real_array(logits, "logits") / temperature
    z = z - np.max(z, axis=-1, keepdims=True)
    exp_z = np.exp(z)
    return typing.cast(RealArray, exp_z / np.sum(exp_z, axis=-1, keepdims=True))


def log_softmax(
    logits: typing.Any,
    temperature: float = 1.0,
) -> RealArray:
    """Log of :func:`softmax`, computed with the log-sum-exp trick."""
    if not (np.isfinite(temperature) and temperature > 0):
        raise InvalidArgumentError("temperature", f"must be a positive real, got {temperature}")

    z = as_real_array(logits, "logits") / temperature
    z = z - np.max(z, axis=-1, keepdims=True)
    return typing.cast(RealArray, z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True)))


def sigmoid(
    value: typing.Any,
) -> typing.Any:
    """Logistic sigmoid, elementwise."""
    return expit(value)


def cross_entropy_hard(
    label: int,
    predicted: typing.Any,
) -> float:
    """Cross entropy against a one-hot target.

    Args:
        label: The 1-based class index.
        predicted: The predicted probability vector.

    Returns:
        float: ``-log(predicted[label])`` with the probability clamped at
            :data:`PROBABILITY_FLOOR`.
    """
    probs = as_real_array(predicted, "predicted")
    num_classes = probs.shape[-1]
    if not 1 <= int(label) <= num_classes:
        raise InvalidArgumentError("label", f"must be in [1, {num_classes}], got {label}")

    return float(-np.log(max(float(probs[int(label) - 1]), PROBABILITY_FLOOR)))


def cross_entropy_soft(
    target: typing.Any,
    predicted: typing.Any,
) -> float:
    """Cross entropy ``-sum_c target_c * log(predicted_c)``."""
    target_arr = as_real_array(target, "target")
    predicted_arr = as_real_array(predicted, "predicted")
    if target_arr.shape != predicted_arr.shape:
        raise InvalidArgumentError(
            "predicted", f"length {predicted_arr.shape[-1]} does not match target length {target_arr.shape[-1]}"
        )

    return float(-np.sum(target_arr * np.log(np.maximum(predicted_arr, PROBABILITY_FLOOR))))


def hard_cross_entropies(
    labels: np.ndarray,
    probabilities: RealArray,
) -> RealArray:
    """Row-wise :func:`cross_entropy_hard` for a batch of 1-based labels."""
    rows = np.arange(probabilities.shape[0])
    picked = probabilities[rows, np.asarray(labels, dtype=np.int64) - 1]
    return typing.cast(RealArray, -np.log(np.maximum(picked, PROBABILITY_FLOOR)))


def soft_cross_entropies(
    targets: RealArray,
    probabilities: RealArray,
) -> RealArray:
    """Row-wise :func:`cross_entropy_soft` for a batch of targets."""
    return typing.cast(RealArray, -np.sum(targets * np.log(np.maximum(probabilities, PROBABILITY_FLOOR)), axis=-1))


def check_gradient(
    function: typing.Callable[[RealArray], float],
    gradient: typing.Callable[[RealArray], RealArray],
    parameters: typing.Any,
    step: float = 1e-5,
) -> float:
    """Compare an analytic gradient against central differences.

    Args:
        function: The scalar function of the flat parameter vector.
        gradient: The analytic gradient of ``function``.
        parameters: The point to check at.
        step: The finite difference step.

    Returns:
        float: The maximum over coordinates of
            ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``, the floor
            keeping vanishing coordinates from dominating.

    Raises:
        NumericError: The function or gradient returned a non-finite value.
    """
    if not step > 0:
        raise InvalidArgumentError("step", f"must be positive, got {step}")

    point = np.array(as_real_array(parameters, "parameters"), dtype=np.float64).reshape(-1)
    analytic = np.asarray(gradient(point.copy()), dtype=np.float64).reshape(-1)
    if analytic.shape != point.shape:
        raise InvalidArgumentError("gradient", f"returned {analytic.size} entries for {point.size} parameters")

    if not np.all(np.isfinite(analytic)):
        raise NumericError("gradient check", "analytic gradient is not finite")

    worst = 0.0
    for idx in range(point.size):
        original = point[idx]
        point[idx] = original + step
        upper = float(function(point.copy()))
        point[idx] = original - step
        lower = float(function(point.copy()))
        point[idx] = original

        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NumericError("gradient check", f"function value is not finite at coordinate {idx}")

        numeric = (upper - lower) / (2 * step)
        error = abs(analytic[idx] - numeric) / max(GRADIENT_ERROR_FLOOR, abs(analytic[idx]) + abs(numeric))
        worst = max(worst, error)

    return worst


def _stream_key(
    stream: str,
) -> typing.Tuple[int, ...]:
    digest = hashlib.sha256(stream.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, len(digest), 4))


class SeededRng:
    """Seeded random stream.

    Wraps a :class:`numpy.random.Generator` over the PCG64 bit generator. The
    stream label is hashed with SHA-256 into the spawn key of the
    :class:`numpy.random.SeedSequence`, so the same ``(seed, stream)`` pair
    always produces the same draws and distinct labels produce independent
    streams.

    Args:
        seed: A 64-bit unsigned seed.
        stream: The text label of the stream.

    Attributes:
        seed: See args.
        stream: See args.
        generator: The underlying numpy generator.
    """

    ALGORITHM = "PCG64"

    def __init__(
        self,
        seed: int,
        stream: str = "root",
    ) -> None:
        if not 0 <= int(seed) < 2**64:
            raise InvalidArgumentError("seed", f"must be a 64-bit unsigned integer, got {seed}")

        self.seed = int(seed)
        self.stream = stream
        sequence = np.random.SeedSequence(self.seed, spawn_key=_stream_key(stream))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} algorithm={self.ALGORITHM} seed={self.seed} stream={self.stream!r}>"

    def child(
        self,
        label: str,
    ) -> "SeededRng":
        """Derive an independent stream without consuming draws from this one."""
        return SeededRng(self.seed, f"{self.stream}/{label}")

    def random(
        self,
        size: typing.Any = None,
    ) -> typing.Any:
        """Uniform draws in [0, 1)."""
        return self.generator.random(size)

    def integers(
        self,
        low: int,
        high: int,
        size: typing.Any = None,
    ) -> typing.Any:
        """Uniform integers in [low, high)."""
        return self.generator.integers(low, high, size=size)

    def normal(
        self,
        loc: float = 0.0,
        scale: float = 1.0,
        size: typing.Any = None,
    ) -> typing.Any:
        return self.generator.normal(loc, scale, size)

    def uniform(
        self,
        low: float,
        high: float,
        size: typing.Any = None,
    ) -> typing.Any:
        return self.generator.uniform(low, high, size)

    def permutation(
        self,
        n: typing.Any,
    ) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(
        self,
        n: int,
        size: int,
        replace: bool = False,
    ) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)
