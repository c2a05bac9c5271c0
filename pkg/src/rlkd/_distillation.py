# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""Knowledge distillation losses, teacher ensembles and the vanilla KD loop.

Losses are per-batch means. The distillation term softens the teacher rows
and the student distribution at the same temperature while the ground truth
term and every accuracy use temperature 1.
"""

import dataclasses
import enum
import logging
import math
import typing

import numpy as np

from rlkd._datasets import Batch, Dataset
from rlkd._exceptions import InvalidArgumentError, NumericDivergenceError, NumericError
from rlkd._models import (
    Gradients,
    MlpClassifier,
    OptimizerSpec,
    accuracy_score,
    evaluate_accuracy,
    hard_label_loss,
)
from rlkd._numerics import (
    PROBABILITY_FLOOR,
    SeededRng,
    hard_cross_entropies,
    soft_cross_entropies,
    softmax,
)
from rlkd._predictions import TeacherPredictions

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class KdConfig:
    """Settings of a distillation run.

    Attributes:
        alpha: Weight of the distillation term, ``1 - alpha`` weighs the
            ground truth term.
        temperature: The softening temperature of both distributions in the
            distillation term.
        scale_by_t_squared: Multiply the distillation term by ``T**2``.
        epochs: The number of passes over the training data.
        batch_size: The mini-batch size.
        optimizer: The student optimizer.
        seed: Seeds the shuffling and rand-single streams.
        select_best_on_dev: Return the epoch with the best dev accuracy
            instead of the last one.
    """

    alpha: float = 0.5
    temperature: float = 5.0
    scale_by_t_squared: bool = False
    epochs: int = 10
    batch_size: int = 64
    optimizer: OptimizerSpec = OptimizerSpec()
    seed: int = 0
    select_best_on_dev: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError("alpha", f"must be in [0, 1], got {self.alpha}")

        if not (math.isfinite(self.temperature) and self.temperature > 0):
            raise InvalidArgumentError("temperature", f"must be a positive real, got {self.temperature}")

        if self.epochs < 0:
            raise InvalidArgumentError("epochs", f"must not be negative, got {self.epochs}")

        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size", f"must be at least 1, got {self.batch_size}")

    def shuffle_rng(self) -> SeededRng:
        """The stream the batch order of every epoch is derived from."""
        return SeededRng(self.seed, "kd-shuffle")


class StrategyKind(enum.Enum):
    """How the soft labels of several teachers are combined."""

    single = "single"
    uniform = "uniform"
    weighted = "weighted"
    rand_single = "rand-single"
    lr_learned = "lr-learned"
    best_single = "best-single"
    selected_subset = "selected-subset"


@dataclasses.dataclass(frozen=True)
class EnsembleStrategy:
    """A teacher ensemble.

    Use the classmethods to build one. ``teacher`` is set for single,
    ``weights`` for weighted and lr-learned and ``subset`` for
    selected-subset.
    """

    kind: StrategyKind
    teacher: typing.Optional[int] = None
    weights: typing.Optional[typing.Tuple[float, ...]] = None
    subset: typing.Optional[typing.Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.kind == StrategyKind.single and (self.teacher is None or self.teacher < 1):
            raise InvalidArgumentError("teacher", f"single needs a teacher index >= 1, got {self.teacher}")

        if self.kind in [StrategyKind.weighted, StrategyKind.lr_learned]:
            if not self.weights:
                raise InvalidArgumentError("weights", f"{self.kind.value} needs weights")

            w = np.asarray(self.weights, dtype=np.float64)
            if not np.all(np.isfinite(w)) or np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
                raise InvalidArgumentError("weights", f"must be nonnegative and sum to 1, got {list(self.weights)}")

        if self.kind == StrategyKind.selected_subset and (not self.subset or min(self.subset) < 1):
            raise InvalidArgumentError("subset", "selected-subset needs at least one teacher index >= 1")

    def __str__(self) -> str:
        if self.kind == StrategyKind.single:
            return f"single-{self.teacher}"

        return self.kind.value

    @classmethod
    def single(cls, teacher: int) -> "EnsembleStrategy":
        return cls(StrategyKind.single, teacher=teacher)

    @classmethod
    def uniform(cls) -> "EnsembleStrategy":
        return cls(StrategyKind.uniform)

    @classmethod
    def weighted(cls, weights: typing.Sequence[float]) -> "EnsembleStrategy":
        return cls(StrategyKind.weighted, weights=tuple(float(w) for w in weights))

    @classmethod
    def rand_single(cls) -> "EnsembleStrategy":
        return cls(StrategyKind.rand_single)

    @classmethod
    def lr_learned(cls, weights: typing.Sequence[float]) -> "EnsembleStrategy":
        return cls(StrategyKind.lr_learned, weights=tuple(float(w) for w in weights))

    @classmethod
    def best_single(cls) -> "EnsembleStrategy":
        return cls(StrategyKind.best_single)

    @classmethod
    def selected_subset(cls, teachers: typing.Iterable[int]) -> "EnsembleStrategy":
        return cls(StrategyKind.selected_subset, subset=tuple(sorted({int(k) for k in teachers})))


class KdBatchLoss(typing.NamedTuple):
    """The three loss values of one KD batch."""

    objective: float  #: The combined objective.
    distillation: float  #: The distillation term.
    ground_truth: float  #: The hard label term.


class KdTrace(typing.NamedTuple):
    """Record of a :func:`vanilla_kd_train` run."""

    batch_losses: typing.List[float]  #: Combined objective of every batch before its update.
    epoch_losses: typing.List[float]  #: Mean objective of every epoch.
    dev_accuracies: typing.List[float]  #: Dev accuracy after every epoch.
    best_epoch: int  #: The 1-based epoch returned, 0 when no epoch ran.

    @property
    def best_dev_accuracy(self) -> typing.Optional[float]:
        return self.dev_accuracies[self.best_epoch - 1] if self.best_epoch else None


def _check_teacher(
    teacher: int,
    num_teachers: int,
) -> None:
    if not 1 <= teacher <= num_teachers:
        raise InvalidArgumentError("teacher", f"must be in [1, {num_teachers}], got {teacher}")


def _selected_average(
    rows: np.ndarray,
    mask: np.ndarray,
) -> np.ndarray:
    """Average the rows ``(n, K, C)`` of the teachers set in ``mask`` ``(n, K)``.

    Rows with an empty mask come back as zeros.
    """
    counts = mask.sum(axis=1)
    total = np.sum(rows * mask[:, :, None], axis=1)
    return typing.cast(np.ndarray, total / np.maximum(counts, 1)[:, None])


def selection_mask(
    selections: typing.Any,
    size: int,
    num_teachers: int,
) -> np.ndarray:
    """Normalise per-instance selections into a boolean ``(n, K)`` mask.

    Args:
        selections: Either a 0/1 array ``(n, K)`` or one collection of
            1-based teacher indices per instance.
        size: The number of instances n.
        num_teachers: The number of teachers K.
    """
    if isinstance(selections, np.ndarray) and selections.ndim == 2:
        if selections.shape != (size, num_teachers):
            raise InvalidArgumentError("selections", f"expected shape {(size, num_teachers)}, got {selections.shape}")

        return selections.astype(bool)

    if len(selections) != size:
        raise InvalidArgumentError("selections", f"need one selection per instance, got {len(selections)}")

    mask = np.zeros((size, num_teachers), dtype=bool)
    for idx, chosen in enumerate(selections):
        for k in chosen:
            _check_teacher(int(k), num_teachers)
            mask[idx, int(k) - 1] = True

    return mask


def _strategy_mask(
    strategy: EnsembleStrategy,
    positions: np.ndarray,
    teacher_preds: TeacherPredictions,
    pick: typing.Optional[int],
) -> np.ndarray:
    num_teachers = teacher_preds.num_teachers
    mask = np.zeros((len(positions), num_teachers), dtype=bool)

    if strategy.kind == StrategyKind.uniform:
        mask[:] = True

    elif strategy.kind == StrategyKind.single:
        teacher = typing.cast(int, strategy.teacher)
        _check_teacher(teacher, num_teachers)
        mask[:, teacher - 1] = True

    elif strategy.kind == StrategyKind.selected_subset:
        for k in typing.cast(typing.Tuple[int, ...], strategy.subset):
            _check_teacher(k, num_teachers)
            mask[:, k - 1] = True

    elif strategy.kind == StrategyKind.best_single:
        best = np.argmin(teacher_preds.losses[positions], axis=1)
        mask[np.arange(len(positions)), best] = True

    elif strategy.kind == StrategyKind.rand_single:
        if pick is None:
            raise InvalidArgumentError("pick", "rand-single needs the teacher picked for the batch")

        _check_teacher(pick, num_teachers)
        mask[:, pick - 1] = True

    else:
        raise InvalidArgumentError("strategy", f"{strategy} is not a selection strategy")

    return mask


def _aggregate(
    strategy: EnsembleStrategy,
    positions: np.ndarray,
    teacher_preds: TeacherPredictions,
    rows: np.ndarray,
    pick: typing.Optional[int] = None,
) -> np.ndarray:
    if strategy.kind in [StrategyKind.weighted, StrategyKind.lr_learned]:
        weights = np.asarray(strategy.weights, dtype=np.float64)
        if weights.shape != (teacher_preds.num_teachers,):
            raise InvalidArgumentError("weights", f"need {teacher_preds.num_teachers} weights, got {len(weights)}")

        return typing.cast(np.ndarray, np.einsum("k,nkc->nc", weights, rows[positions]))

    mask = _strategy_mask(strategy, positions, teacher_preds, pick)
    return _selected_average(rows[positions], mask)


def ensemble_soft_labels(
    strategy: EnsembleStrategy,
    instance_ids: typing.Iterable[int],
    teacher_preds: TeacherPredictions,
    pick: typing.Optional[int] = None,
) -> np.ndarray:
    """Batch form of :func:`ensemble_soft_label`, shape ``(n, C)``."""
    positions = teacher_preds.positions(instance_ids)
    return _aggregate(strategy, positions, teacher_preds, teacher_preds.soft_probabilities, pick)


def ensemble_soft_label(
    strategy: EnsembleStrategy,
    instance_id: int,
    teacher_preds: TeacherPredictions,
    pick: typing.Optional[int] = None,
) -> np.ndarray:
    """The ensemble's soft label of one instance.

    A convex combination of the K temperature-T teacher rows. Best-single
    takes the teacher with the lowest loss on the instance, ties going to the
    lowest index.

    Args:
        strategy: The ensemble.
        instance_id: The instance.
        teacher_preds: The teacher predictions covering the instance.
        pick: The batch's teacher for rand-single.

    Returns:
        np.ndarray: The probability vector ``(C,)``.
    """
    return ensemble_soft_labels(strategy, [instance_id], teacher_preds, pick)[0]


def selected_soft_labels(
    instance_ids: typing.Iterable[int],
    teacher_preds: TeacherPredictions,
    mask: np.ndarray,
    temperature_one: bool = False,
) -> np.ndarray:
    """Average the rows of the teachers selected per instance.

    Args:
        instance_ids: The instances.
        teacher_preds: The teacher predictions.
        mask: Boolean selection ``(n, K)``.
        temperature_one: Average the temperature 1 rows instead of the soft
            rows.
    """
    positions = teacher_preds.positions(instance_ids)
    rows = teacher_preds.probabilities if temperature_one else teacher_preds.soft_probabilities
    return _selected_average(rows[positions], mask)


def rand_single_pick(
    batch_index: int,
    num_teachers: int,
    rng: SeededRng,
) -> int:
    """The teacher used for a whole mini-batch by rand-single.

    The draw comes from the batch's own child stream so a pick depends only
    on the rng and the batch index.
    """
    if num_teachers < 1:
        raise InvalidArgumentError("num_teachers", f"must be at least 1, got {num_teachers}")

    return int(rng.child(f"batch-{batch_index}").integers(1, num_teachers + 1))


def kd_objective(
    distillation: float,
    ground_truth: float,
    alpha: float,
) -> float:
    """``alpha * distillation + (1 - alpha) * ground_truth``."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgumentError("alpha", f"must be in [0, 1], got {alpha}")

    return alpha * distillation + (1.0 - alpha) * ground_truth


def kd_loss(
    student: MlpClassifier,
    batch: Batch,
    targets: np.ndarray,
    selected: np.ndarray,
    config: KdConfig,
    with_gradients: bool = True,
) -> typing.Tuple[KdBatchLoss, typing.Optional[Gradients]]:
    """Combined KD objective of a batch and its parameter gradients.

    Args:
        student: The student.
        batch: The batch.
        targets: The aggregated temperature-T soft labels ``(n, C)``.
        selected: Boolean ``(n,)``, False for instances without any teacher.
            Those contribute only their hard label term.
        config: Supplies alpha, the temperature and the T squared flag.
        with_gradients: Skip the backward pass when False.

    Returns:
        Tuple[KdBatchLoss, Optional[Gradients]]: The losses and gradients. All
            losses are NaN and there are no gradients when the logits are not
            finite.
    """
    n = batch.size
    temperature = config.temperature
    scale = temperature**2 if config.scale_by_t_squared else 1.0

    logits, activations = student.forward(batch.features)
    if not np.all(np.isfinite(logits)):
        return KdBatchLoss(float("nan"), float("nan"), float("nan")), None

    probs = softmax(logits)
    soft_probs = softmax(logits, temperature)

    ground_truth = float(np.mean(hard_cross_entropies(batch.labels, probs)))
    count = int(selected.sum())
    distillation = 0.0
    if count:
        distillation = scale * float(np.mean(soft_cross_entropies(targets[selected], soft_probs[selected])))

    loss = KdBatchLoss(kd_objective(distillation, ground_truth, config.alpha), distillation, ground_truth)
    if not with_gradients:
        return loss, None

    grad_ce = probs.copy()
    grad_ce[np.arange(n), batch.labels - 1] -= 1.0
    grad_ce /= n

    grad_dl = np.zeros_like(probs)
    if count:
        grad_dl[selected] = scale * (soft_probs[selected] - targets[selected]) / (temperature * count)

    grad_logits = config.alpha * grad_dl + (1.0 - config.alpha) * grad_ce
    return loss, student.backward(activations, grad_logits)


def distillation_loss(
    student: MlpClassifier,
    batch: Batch,
    teacher_preds: TeacherPredictions,
    selections: typing.Any,
    config: KdConfig,
) -> float:
    """The distillation term of a batch under per-instance teacher selections.

    The target of an instance is the average of its selected teachers'
    temperature-T rows. Instances with no selected teacher are left out of
    the mean, which is 0 when no instance selected anything.

    Args:
        student: The student.
        batch: The batch.
        teacher_preds: Predictions covering the batch ids.
        selections: A 0/1 array ``(n, K)`` or one collection of 1-based
            teacher indices per instance.
        config: Supplies the temperature and the T squared flag.

    Returns:
        float: The mean soft cross entropy.

    Raises:
        CoverageError: A batch id has no teacher predictions.
    """
    mask = selection_mask(selections, batch.size, teacher_preds.num_teachers)
    targets = selected_soft_labels(batch.ids, teacher_preds, mask)
    loss, _ = kd_loss(student, batch, targets, mask.any(axis=1), config, with_gradients=False)
    return loss.distillation


def ground_truth_loss(
    student: MlpClassifier,
    batch: Batch,
) -> float:
    """Mean hard cross entropy of the student on a batch."""
    loss, _ = hard_label_loss(student, batch, with_gradients=False)
    return loss


def _label_probabilities(
    teacher_preds: TeacherPredictions,
    dataset: Dataset,
) -> np.ndarray:
    positions = teacher_preds.positions(dataset.ids)
    rows = teacher_preds.probabilities[positions]
    return typing.cast(np.ndarray, rows[np.arange(len(dataset)), :, dataset.labels - 1])


def _mixture_nll(
    label_probs: np.ndarray,
    weights: np.ndarray,
) -> float:
    mixture = label_probs @ weights
    return float(-np.mean(np.log(np.maximum(mixture, PROBABILITY_FLOOR))))


def fit_lr_ensemble(
    teacher_preds: TeacherPredictions,
    fit_split: Dataset,
    iterations: int = 500,
    learning_rate: float = 0.5,
    trace: typing.Optional[typing.List[float]] = None,
) -> np.ndarray:
    """Fit ensemble weights by maximising the mixture likelihood.

    The weights are the softmax of K free logits, optimised by full-batch
    gradient descent on the negative log-likelihood of
    ``sum_k w_k P_k(y | x)`` over the split. A step that would raise the NLL
    is halved until it does not, so accepted iterations never increase it.

    Args:
        teacher_preds: Predictions covering the split.
        fit_split: The labelled instances to fit on, train or dev.
        iterations: The iteration cap.
        learning_rate: The initial step size of every iteration.
        trace: When set, the NLL before the first and after every accepted
            iteration is appended.

    Returns:
        np.ndarray: The weights ``(K,)``, nonnegative and summing to 1.

    Raises:
        NumericError: The NLL became non-finite.
    """
    if not learning_rate > 0:
        raise InvalidArgumentError("learning_rate", f"must be positive, got {learning_rate}")

    label_probs = _label_probabilities(teacher_preds, fit_split)
    num_teachers = teacher_preds.num_teachers
    logits = np.zeros(num_teachers, dtype=np.float64)
    weights = softmax(logits)
    nll = _mixture_nll(label_probs, weights)
    if trace is not None:
        trace.append(nll)

    for iteration in range(1, iterations + 1):
        if not math.isfinite(nll):
            raise NumericError("fit_lr_ensemble", f"NLL is {nll} at iteration {iteration}")

        mixture = np.maximum(label_probs @ weights, PROBABILITY_FLOOR)
        grad_weights = -np.mean(label_probs / mixture[:, None], axis=0)
        grad_logits = weights * (grad_weights - weights @ grad_weights)

        step = learning_rate
        for _ in range(30):
            candidate = softmax(logits - step * grad_logits)
            candidate_nll = _mixture_nll(label_probs, candidate)
            if candidate_nll <= nll:
                break

            log.debug("LR ensemble step %g rejected at iteration %d", step, iteration)
            step /= 2
        else:
            break

        logits = logits - step * grad_logits
        improvement = nll - candidate_nll
        weights = candidate
        nll = candidate_nll
        if trace is not None:
            trace.append(nll)

        if improvement < 1e-8:
            log.debug("LR ensemble converged after %d iterations with NLL %.8f", iteration, nll)
            break

    return typing.cast(np.ndarray, weights)


def dev_accuracy_weights(
    teacher_preds: TeacherPredictions,
    dev: Dataset,
) -> np.ndarray:
    """Weighted-ensemble weights proportional to each teacher's dev accuracy."""
    positions = teacher_preds.positions(dev.ids)
    rows = teacher_preds.probabilities[positions]
    accuracies = np.array([accuracy_score(rows[:, k], dev.labels) for k in range(teacher_preds.num_teachers)])
    if accuracies.sum() == 0:
        return np.full(teacher_preds.num_teachers, 1.0 / teacher_preds.num_teachers)

    return typing.cast(np.ndarray, accuracies / accuracies.sum())


def evaluate_ensemble_accuracy(
    strategy: EnsembleStrategy,
    teacher_preds: TeacherPredictions,
    dataset: Dataset,
) -> float:
    """Accuracy of a teacher ensemble using the temperature 1 rows.

    Rand-single picks a teacher per training batch and has no teacher-side
    prediction.
    """
    if strategy.kind == StrategyKind.rand_single:
        raise InvalidArgumentError("strategy", "rand-single is only defined as a distillation strategy")

    positions = teacher_preds.positions(dataset.ids)
    combined = _aggregate(strategy, positions, teacher_preds, teacher_preds.probabilities)
    return accuracy_score(combined, dataset.labels)


def vanilla_kd_train(
    student: MlpClassifier,
    teacher_preds: typing.Optional[TeacherPredictions],
    strategy: typing.Optional[EnsembleStrategy],
    config: KdConfig,
    train: Dataset,
    dev: Dataset,
) -> typing.Tuple[MlpClassifier, KdTrace]:
    """Distil a teacher ensemble into a student.

    The ensemble's soft label is the single teacher of the combined
    objective. Without a strategy the student trains on the hard labels only,
    which matches :func:`rlkd.train_classifier` step for step when both use
    ``config.shuffle_rng()``.

    Args:
        student: The initial student, left untouched.
        teacher_preds: Predictions covering the training ids.
        strategy: The ensemble or ``None`` for plain fine-tuning.
        config: The KD settings.
        train: The training split.
        dev: The split used to pick the returned epoch.

    Returns:
        Tuple[MlpClassifier, KdTrace]: The student of the best dev epoch, or
            of the last epoch when ``select_best_on_dev`` is unset, and the
            trace.

    Raises:
        NumericDivergenceError: A batch loss was not finite.
    """
    if strategy is not None:
        if teacher_preds is None:
            raise InvalidArgumentError("teacher_preds", f"strategy {strategy} needs teacher predictions")

        if abs(teacher_preds.temperature - config.temperature) > 1e-12:
            raise InvalidArgumentError(
                "teacher_preds",
                f"soft rows are at T={teacher_preds.temperature} but the student uses T={config.temperature}",
            )

    model = student.copy()
    optimizer = config.optimizer.create(model)
    shuffle_rng = config.shuffle_rng()
    pick_rng = SeededRng(config.seed, "rand-single")

    batch_losses: typing.List[float] = []
    epoch_losses: typing.List[float] = []
    dev_accuracies: typing.List[float] = []
    best = model
    best_epoch = 0

    for epoch in range(1, config.epochs + 1):
        total = 0.0
        epoch_picks = pick_rng.child(f"epoch-{epoch}")
        for batch_idx, batch in enumerate(train.batches(config.batch_size, shuffle_rng.child(f"epoch-{epoch}")), 1):
            if strategy is None:
                loss_value, grads = hard_label_loss(model, batch)
            else:
                preds = typing.cast(TeacherPredictions, teacher_preds)
                pick = None
                if strategy.kind == StrategyKind.rand_single:
                    pick = rand_single_pick(batch_idx, preds.num_teachers, epoch_picks)

                targets = ensemble_soft_labels(strategy, batch.ids, preds, pick)
                kd, grads = kd_loss(model, batch, targets, np.ones(batch.size, dtype=bool), config)
                loss_value = kd.objective

            if not math.isfinite(loss_value):
                raise NumericDivergenceError("vanilla_kd_train", epoch, batch_idx)

            optimizer.step(model, typing.cast(Gradients, grads))
            batch_losses.append(loss_value)
            total += loss_value * batch.size

        epoch_losses.append(total / len(train))
        dev_accuracies.append(evaluate_accuracy(model, dev))
        log.info(
            "KD epoch %d with %s: loss %.6f, dev accuracy %.4f",
            epoch,
            strategy or "hard labels",
            epoch_losses[-1],
            dev_accuracies[-1],
        )

        if config.select_best_on_dev and (best_epoch == 0 or dev_accuracies[-1] > dev_accuracies[best_epoch - 1]):
            best = model.copy()
            best_epoch = epoch

    if not config.select_best_on_dev:
        best = model
        best_epoch = config.epochs

    return best, KdTrace(batch_losses, epoch_losses, dev_accuracies, best_epoch)


__all__ = [
    "EnsembleStrategy",
    "KdBatchLoss",
    "KdConfig",
    "KdTrace",
    "StrategyKind",
    "dev_accuracy_weights",
    "distillation_loss",
    "ensemble_soft_label",
    "ensemble_soft_labels",
    "evaluate_ensemble_accuracy",
    "fit_lr_ensemble",
    "ground_truth_loss",
    "kd_loss",
    "kd_objective",
    "rand_single_pick",
    "selected_soft_labels",
    "selection_mask",
    "vanilla_kd_train",
]
