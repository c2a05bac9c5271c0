# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""Dense feed-forward classifiers.

Contains the MLP used for teachers and students together with its hand
derived gradients, the SGD and Adam optimizers, the teacher pool factory and
accuracy evaluation.
"""

import concurrent.futures
import dataclasses
import enum
import json
import logging
import math
import os
import typing

import numpy as np

from rlkd._datasets import Batch, Dataset
from rlkd._exceptions import InvalidArgumentError, NumericDivergenceError
from rlkd._numerics import SeededRng, as_real_array, hard_cross_entropies, softmax
from rlkd._predictions import TeacherPredictions

log = logging.getLogger(__name__)

PathType = typing.Union[str, "os.PathLike[str]"]
Gradients = typing.List[typing.Tuple[np.ndarray, np.ndarray]]

STUDENT_ARCHITECTURES: typing.Dict[str, typing.Tuple[int, ...]] = {
    "small": (8,),
    "large": (32, 32),
}
"""Hidden layer widths of the named student sizes."""

DEFAULT_TEACHER_WIDTHS = (64, 48, 80, 56)
"""Hidden widths cycled through when a teacher pool has no explicit layout."""


class MlpClassifier:
    """Multilayer perceptron classifier.

    Rectifier activations on every hidden layer and identity on the output
    layer, so :meth:`forward` returns logits. Weights are stored as
    ``(fan_in, fan_out)`` matrices.

    Args:
        layer_sizes: The sizes ``[d, h_1, ..., h_L, C]``.
        weights: The per-layer weight matrices, zeros when omitted.
        biases: The per-layer bias vectors, zeros when omitted.
    """

    def __init__(
        self,
        layer_sizes: typing.Sequence[int],
        weights: typing.Optional[typing.Sequence[np.ndarray]] = None,
        biases: typing.Optional[typing.Sequence[np.ndarray]] = None,
    ) -> None:
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise InvalidArgumentError("layer_sizes", f"need at least input and output sizes, got {layer_sizes}")

        shapes = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        if weights is None:
            weights = [np.zeros(s, dtype=np.float64) for s in shapes]

        if biases is None:
            biases = [np.zeros(s[1], dtype=np.float64) for s in shapes]

        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]

        if [w.shape for w in self.weights] != shapes or [b.shape for b in self.biases] != [(s[1],) for s in shapes]:
            raise InvalidArgumentError("weights", f"parameter shapes do not match layer sizes {self.layer_sizes}")

        if not all(np.all(np.isfinite(p)) for p in self.weights + self.biases):
            raise InvalidArgumentError("weights", "parameters must be finite")

    def __repr__(self) -> str:
        return f"<{type(self).__name__} layer_sizes={list(self.layer_sizes)}>"

    @classmethod
    def initialize(
        cls,
        layer_sizes: typing.Sequence[int],
        rng: SeededRng,
    ) -> "MlpClassifier":
        """Create a model with Glorot uniform weights and zero biases."""
        sizes = [int(s) for s in layer_sizes]
        weights = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))

        return cls(sizes, weights)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpClassifier":
        return MlpClassifier(self.layer_sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(
        self,
        features: np.ndarray,
    ) -> typing.Tuple[np.ndarray, typing.List[np.ndarray]]:
        """Forward pass keeping the activations needed by :meth:`backward`.

        Args:
            features: A batch of inputs, shape ``(n, d)``.

        Returns:
            Tuple[np.ndarray, List[np.ndarray]]: The logits ``(n, C)`` and the
                input of every layer.
        """
        activations = [features]
        hidden = features
        last = len(self.weights) - 1
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            hidden = hidden @ w + b
            if idx != last:
                hidden = np.maximum(hidden, 0.0)
                activations.append(hidden)

        return hidden, activations

    def backward(
        self,
        activations: typing.List[np.ndarray],
        grad_logits: np.ndarray,
    ) -> Gradients:
        """Backpropagate a gradient with respect to the logits.

        Args:
            activations: The layer inputs returned by :meth:`forward`.
            grad_logits: The loss gradient with respect to the logits.

        Returns:
            Gradients: ``(dW, db)`` for every layer.
        """
        grads: Gradients = []
        delta = grad_logits
        for idx in range(len(self.weights) - 1, -1, -1):
            layer_input = activations[idx]
            grads.append((layer_input.T @ delta, delta.sum(axis=0)))
            if idx > 0:
                delta = (delta @ self.weights[idx].T) * (layer_input > 0.0)

        grads.reverse()
        return grads

    def flat_parameters(self) -> np.ndarray:
        """All parameters as one vector, weights row-major then bias per layer."""
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_flat_parameters(
        self,
        values: np.ndarray,
    ) -> "MlpClassifier":
        """A new model with the parameters taken from a flat vector."""
        weights = []
        biases = []
        offset = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(values[offset : offset + w.size].reshape(w.shape))
            offset += w.size
            biases.append(values[offset : offset + b.size])
            offset += b.size

        return MlpClassifier(self.layer_sizes, weights, biases)


def flatten_gradients(
    grads: Gradients,
) -> np.ndarray:
    """Flatten per-layer gradients in :meth:`MlpClassifier.flat_parameters` order."""
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])


def _check_features(
    model: MlpClassifier,
    features: typing.Any,
) -> np.ndarray:
    arr = as_real_array(features, "features")
    if arr.shape[-1] != model.input_dim:
        raise InvalidArgumentError("features", f"expected length {model.input_dim}, got {arr.shape[-1]}")

    return arr


def _check_dataset(
    model: MlpClassifier,
    dataset: Dataset,
) -> None:
    if dataset.feature_dim != model.input_dim or dataset.num_classes != model.num_classes:
        raise InvalidArgumentError(
            "dataset",
            f"{dataset.name} has d={dataset.feature_dim}, C={dataset.num_classes} but the model expects "
            f"d={model.input_dim}, C={model.num_classes}",
        )


def forward_logits(
    model: MlpClassifier,
    features: typing.Any,
) -> np.ndarray:
    """The logits of one feature vector ``(d,)`` or a batch ``(n, d)``."""
    arr = _check_features(model, features)
    logits, _ = model.forward(np.atleast_2d(arr))
    return logits[0] if arr.ndim == 1 else logits


def predict_proba(
    model: MlpClassifier,
    features: typing.Any,
    temperature: float = 1.0,
) -> np.ndarray:
    """Softmax of :func:`forward_logits` at the given temperature."""
    return softmax(forward_logits(model, features), temperature)


def hidden_representation(
    model: MlpClassifier,
    features: typing.Any,
) -> np.ndarray:
    """The activation of the last hidden layer, or the input for linear models."""
    arr = np.atleast_2d(_check_features(model, features))
    _, activations = model.forward(arr)
    return activations[-1]


def accuracy_score(
    scores: np.ndarray,
    labels: np.ndarray,
) -> float:
    """Fraction of rows whose argmax equals the 1-based label.

    Ties go to the lowest class index.
    """
    predicted = np.argmax(scores, axis=-1) + 1
    return float(np.mean(predicted == labels))


def evaluate_accuracy(
    model: MlpClassifier,
    dataset: Dataset,
) -> float:
    """Prediction accuracy of a model on a dataset."""
    _check_dataset(model, dataset)
    return accuracy_score(forward_logits(model, dataset.features), dataset.labels)


def hard_label_loss(
    model: MlpClassifier,
    batch: Batch,
    with_gradients: bool = True,
) -> typing.Tuple[float, typing.Optional[Gradients]]:
    """Mean hard cross entropy of a batch and its parameter gradients.

    The loss is NaN without gradients when the logits are not finite.
    """
    logits, activations = model.forward(batch.features)
    if not np.all(np.isfinite(logits)):
        return float("nan"), None

    probs = softmax(logits)
    loss = float(np.mean(hard_cross_entropies(batch.labels, probs)))
    if not with_gradients:
        return loss, None

    grad_logits = probs.copy()
    grad_logits[np.arange(batch.size), batch.labels - 1] -= 1.0
    grad_logits /= batch.size
    return loss, model.backward(activations, grad_logits)


class OptimizerKind(enum.Enum):
    """Parameter update rule."""

    sgd = "sgd"  #: Plain mini-batch gradient descent.
    adam = "adam"  #: Adaptive moment estimation.


DEFAULT_LEARNING_RATES = {
    OptimizerKind.sgd: 1e-2,
    OptimizerKind.adam: 1e-3,
}


@dataclasses.dataclass(frozen=True)
class OptimizerSpec:
    """Declarative optimizer settings.

    A learning rate of ``None`` picks the desk-scale default of the kind.
    """

    kind: OptimizerKind = OptimizerKind.adam
    learning_rate: typing.Optional[float] = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate", f"must be positive, got {self.learning_rate}")

        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.epsilon > 0):
            raise InvalidArgumentError("beta1", "moment decays must be in [0, 1) and epsilon positive")

    @property
    def effective_learning_rate(self) -> float:
        return self.learning_rate if self.learning_rate is not None else DEFAULT_LEARNING_RATES[self.kind]

    def create(
        self,
        model: MlpClassifier,
    ) -> "OptimizerState":
        return OptimizerState(self, model)


class OptimizerState:
    """Optimizer bound to the parameters of one model.

    Args:
        spec: The optimizer settings.
        model: The model whose parameter shapes the moments follow.

    Attributes:
        step_count: The number of updates applied.
        first_moment: Adam first moment per parameter, empty for SGD.
        second_moment: Adam second moment per parameter, empty for SGD.
    """

    def __init__(
        self,
        spec: OptimizerSpec,
        model: MlpClassifier,
    ) -> None:
        self.kind = spec.kind
        self.learning_rate = spec.effective_learning_rate
        self.spec = spec
        self.step_count = 0
        self.first_moment: typing.List[np.ndarray] = []
        self.second_moment: typing.List[np.ndarray] = []
        if self.kind == OptimizerKind.adam:
            params = model.weights + model.biases
            self.first_moment = [np.zeros_like(p) for p in params]
            self.second_moment = [np.zeros_like(p) for p in params]

    def step(
        self,
        model: MlpClassifier,
        grads: Gradients,
    ) -> None:
        """Apply one update to the model parameters in place."""
        self.step_count += 1
        params = model.weights + model.biases
        flat_grads = [g[0] for g in grads] + [g[1] for g in grads]

        if self.kind == OptimizerKind.sgd:
            for p, g in zip(params, flat_grads):
                p -= self.learning_rate * g
            return

        beta1 = self.spec.beta1
        beta2 = self.spec.beta2
        correction1 = 1.0 - beta1**self.step_count
        correction2 = 1.0 - beta2**self.step_count
        for idx, (p, g) in enumerate(zip(params, flat_grads)):
            m = self.first_moment[idx]
            v = self.second_moment[idx]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.spec.epsilon)


def train_classifier(
    model: MlpClassifier,
    train: Dataset,
    optimizer: OptimizerState,
    epochs: int,
    batch_size: int,
    rng: SeededRng,
) -> typing.Tuple[MlpClassifier, typing.List[float]]:
    """Mini-batch training on the mean hard cross entropy.

    The batch order of epoch ``e`` is drawn from ``rng.child("epoch-e")`` so
    the run is fully determined by the rng seed and stream.

    Args:
        model: The model, updated in place.
        train: The training data.
        optimizer: The optimizer bound to ``model``.
        epochs: The number of passes over the data.
        batch_size: The mini-batch size.
        rng: The stream the shuffling is drawn from.

    Returns:
        Tuple[MlpClassifier, List[float]]: The model and the mean loss of each
            epoch.

    Raises:
        NumericDivergenceError: A batch loss was not finite.
    """
    _check_dataset(model, train)
    if epochs < 0:
        raise InvalidArgumentError("epochs", f"must not be negative, got {epochs}")

    trace = []
    for epoch in range(1, epochs + 1):
        total = 0.0
        for batch_idx, batch in enumerate(train.batches(batch_size, rng.child(f"epoch-{epoch}")), start=1):
            loss, grads = hard_label_loss(model, batch)
            if not math.isfinite(loss):
                raise NumericDivergenceError("train_classifier", epoch, batch_idx)

            optimizer.step(model, typing.cast(Gradients, grads))
            total += loss * batch.size

        trace.append(total / len(train))
        log.debug("Epoch %d of %s: mean loss %.6f", epoch, train.name, trace[-1])

    return model, trace


class CorruptionMode(enum.Enum):
    """How labels inside a corrupted region are replaced."""

    uniform_random = "uniform-random"  #: Every label is redrawn uniformly over all classes.


@dataclasses.dataclass(frozen=True)
class TeacherCorruptionSpec:
    """Region of the training data whose labels a teacher never sees."""

    region: int
    mode: CorruptionMode = CorruptionMode.uniform_random

    def apply(
        self,
        dataset: Dataset,
        rng: SeededRng,
    ) -> Dataset:
        """A copy of the dataset with the region relabeled."""
        if dataset.regions is None or not np.any(dataset.regions == self.region):
            raise InvalidArgumentError("region", f"region {self.region} does not occur in {dataset.name}")

        labels = dataset.labels.copy()
        mask = dataset.regions == self.region
        labels[mask] = rng.integers(1, dataset.num_classes + 1, int(mask.sum()))
        return dataset.with_labels(labels, f"{dataset.name}-corrupt-{self.region}")


def build_classifier(
    input_dim: int,
    num_classes: int,
    hidden_layers: typing.Sequence[int],
    rng: SeededRng,
) -> MlpClassifier:
    """Initialise an MLP with the given hidden widths."""
    return MlpClassifier.initialize([input_dim, *hidden_layers, num_classes], rng)


def make_teacher_pool(
    train: Dataset,
    num_teachers: int,
    corruptions: typing.Optional[typing.Sequence[typing.Optional[TeacherCorruptionSpec]]] = None,
    hidden_layers: typing.Optional[typing.Sequence[typing.Sequence[int]]] = None,
    seed: int = 0,
    epochs: int = 20,
    batch_size: int = 64,
    optimizer: typing.Optional[OptimizerSpec] = None,
    max_workers: int = 1,
) -> typing.List[MlpClassifier]:
    """Train a pool of diverse teachers.

    Teacher k trains on its own label-corrupted copy of the data with its own
    seed stream and hidden layout. The trainings share no state so they run
    in a thread pool when ``max_workers`` is above 1; the result does not
    depend on the worker count.

    Args:
        train: The clean training data.
        num_teachers: The pool size K.
        corruptions: Per-teacher corruption or ``None`` for a clean teacher.
        hidden_layers: Per-teacher hidden widths, defaults to two layers of
            the widths in :data:`DEFAULT_TEACHER_WIDTHS`.
        seed: The pool seed.
        epochs: Training epochs per teacher.
        batch_size: Training batch size.
        optimizer: Optimizer settings, Adam with the default rate if omitted.
        max_workers: Number of teachers trained concurrently.

    Returns:
        List[MlpClassifier]: The trained teachers in index order.
    """
    if num_teachers < 1:
        raise InvalidArgumentError("num_teachers", f"must be at least 1, got {num_teachers}")

    corruptions = list(corruptions) if corruptions is not None else [None] * num_teachers
    if len(corruptions) != num_teachers:
        raise InvalidArgumentError("corruptions", f"need {num_teachers} entries, got {len(corruptions)}")

    if hidden_layers is None:
        hidden_layers = [(w, w) for w in (DEFAULT_TEACHER_WIDTHS * num_teachers)[:num_teachers]]

    if len(hidden_layers) != num_teachers:
        raise InvalidArgumentError("hidden_layers", f"need {num_teachers} entries, got {len(hidden_layers)}")

    opt_spec = optimizer or OptimizerSpec()
    pool_rng = SeededRng(seed, "teacher-pool")

    def train_teacher(k: int) -> MlpClassifier:
        rng = pool_rng.child(f"teacher-{k}")
        corruption = corruptions[k - 1]
        data = corruption.apply(train, rng.child("corrupt")) if corruption else train
        model = build_classifier(train.feature_dim, train.num_classes, hidden_layers[k - 1], rng.child("init"))
        train_classifier(model, data, opt_spec.create(model), epochs, batch_size, rng.child("train"))
        log.info("Trained teacher %d (%s) on %s", k, model, data.name)
        return model

    if max_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
            return list(executor.map(train_teacher, range(1, num_teachers + 1)))

    return [train_teacher(k) for k in range(1, num_teachers + 1)]


def compute_teacher_predictions(
    pool: typing.Sequence[MlpClassifier],
    dataset: Dataset,
    temperature: float,
) -> TeacherPredictions:
    """Soft labels and CE losses of every teacher on every instance.

    Args:
        pool: The teachers.
        dataset: The instances to predict.
        temperature: The distillation temperature of the soft rows.

    Returns:
        TeacherPredictions: Rows at ``temperature`` and at 1 with the losses
            computed from the temperature 1 rows.
    """
    if not pool:
        raise InvalidArgumentError("pool", "at least one teacher is required")

    for model in pool:
        _check_dataset(model, dataset)

    logits = np.stack([forward_logits(model, dataset.features) for model in pool], axis=1)
    return TeacherPredictions(
        ids=dataset.ids,
        labels=dataset.labels,
        soft_probabilities=softmax(logits, temperature),
        probabilities=softmax(logits, 1.0),
        temperature=temperature,
    )


def _encode_array(
    value: np.ndarray,
) -> typing.List[str]:
    return [float(v).hex() for v in value.ravel()]


def _decode_array(
    value: typing.List[str],
    shape: typing.Tuple[int, ...],
) -> np.ndarray:
    return np.array([float.fromhex(v) for v in value], dtype=np.float64).reshape(shape)


def save_model(
    model: MlpClassifier,
    path: PathType,
) -> None:
    """Write a model checkpoint.

    Parameters are stored row-major as hexadecimal float literals so a
    :func:`load_model` returns bit-identical values.
    """
    data = {
        "format": "rlkd-mlp",
        "layer_sizes": list(model.layer_sizes),
        "weights": [_encode_array(w) for w in model.weights],
        "biases": [_encode_array(b) for b in model.biases],
    }
    with open(path, mode="w", encoding="utf-8") as fd:
        json.dump(data, fd, indent=1)


def load_model(
    path: PathType,
) -> MlpClassifier:
    """Read a checkpoint written by :func:`save_model`."""
    with open(path, mode="r", encoding="utf-8") as fd:
        data = json.load(fd)

    if data.get("format") != "rlkd-mlp":
        raise InvalidArgumentError("path", f"{path} is not an rlkd model checkpoint")

    sizes = data["layer_sizes"]
    shapes = list(zip(sizes[:-1], sizes[1:]))
    weights = [_decode_array(w, s) for w, s in zip(data["weights"], shapes)]
    biases = [_decode_array(b, (s[1],)) for b, s in zip(data["biases"], shapes)]
    return MlpClassifier(sizes, weights, biases)


__all__ = [
    "CorruptionMode",
    "MlpClassifier",
    "OptimizerKind",
    "OptimizerSpec",
    "OptimizerState",
    "STUDENT_ARCHITECTURES",
    "TeacherCorruptionSpec",
    "accuracy_score",
    "build_classifier",
    "compute_teacher_predictions",
    "evaluate_accuracy",
    "flatten_gradients",
    "forward_logits",
    "hard_label_loss",
    "hidden_representation",
    "load_model",
    "make_teacher_pool",
    "predict_proba",
    "save_model",
    "train_classifier",
]
