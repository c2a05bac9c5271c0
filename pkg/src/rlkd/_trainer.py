# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""Joint training of the student and the teacher selector.

A run pretrains the student on the uniform ensemble, pretrains the selector
against the quality of the teachers it selects and then trains both batch by
batch: the selector samples the teachers of every instance, the student takes
one KD step on the average of the selected soft labels and the selector is
updated with the reward of the updated student.
"""

import dataclasses
import enum
import json
import logging
import math
import os
import typing

import numpy as np

from rlkd._datasets import Dataset
from rlkd._distillation import (
    EnsembleStrategy,
    KdConfig,
    KdTrace,
    kd_loss,
    selected_soft_labels,
    vanilla_kd_train,
)
from rlkd._exceptions import InvalidArgumentError, NumericDivergenceError, TraceFileError
from rlkd._models import Gradients, MlpClassifier, compute_teacher_predictions, evaluate_accuracy, save_model
from rlkd._numerics import SeededRng, hard_cross_entropies
from rlkd._policy import (
    EpisodeHistory,
    GradientMode,
    RewardBaseline,
    RewardConfig,
    RewardVariant,
    TeacherSelectorParams,
    build_states,
    compute_reward,
    policy_update,
    sample_batch_actions,
    save_policy,
    selection_profile,
    state_dim,
)
from rlkd._predictions import TeacherPredictions

log = logging.getLogger(__name__)

PathType = typing.Union[str, "os.PathLike[str]"]
Representation = typing.Callable[[np.ndarray], np.ndarray]


def raw_features(
    features: np.ndarray,
) -> np.ndarray:
    """The default instance representation, the standardized features."""
    return features


class Schedule(enum.Enum):
    """Order of the student and selector updates."""

    joint = "joint"  #: Both updates on every batch.
    alternating = "alternating"  #: Student on odd batches, selector on even batches.


class SelectorPretrainReward(enum.Enum):
    """Reward used while pretraining the selector."""

    ensemble = "ensemble"  #: Quality of the average of the selected teachers.
    student = "student"  #: Reward of the pretrained student, which is not updated.


@dataclasses.dataclass(frozen=True)
class RlkdConfig:
    """Settings of a selector-driven distillation run.

    Attributes:
        kd: The distillation settings, ``kd.epochs`` is unused.
        reward: The reward settings.
        policy_learning_rate: The selector learning rate, 0 freezes it.
        epochs: The number of joint training epochs.
        schedule: The update order.
        student_pretrain_epochs: Epochs of uniform ensemble distillation.
        selector_pretrain_epochs: Epochs of selector pretraining.
        selector_pretrain_reward: The pretraining reward.
        gradient_mode: The policy gradient estimator.
        seed: Seeds the action sampling streams.
    """

    kd: KdConfig = KdConfig()
    reward: RewardConfig = RewardConfig()
    policy_learning_rate: float = 1e-3
    epochs: int = 10
    schedule: Schedule = Schedule.joint
    student_pretrain_epochs: int = 5
    selector_pretrain_epochs: int = 3
    selector_pretrain_reward: SelectorPretrainReward = SelectorPretrainReward.ensemble
    gradient_mode: GradientMode = GradientMode.log
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise InvalidArgumentError("epochs", f"must be at least 1, got {self.epochs}")

        if not (math.isfinite(self.policy_learning_rate) and self.policy_learning_rate >= 0):
            raise InvalidArgumentError(
                "policy_learning_rate", f"must be a nonnegative real, got {self.policy_learning_rate}"
            )

        for name in ["student_pretrain_epochs", "selector_pretrain_epochs"]:
            if getattr(self, name) < 0:
                raise InvalidArgumentError(name, f"must not be negative, got {getattr(self, name)}")


class EpochRecord(typing.NamedTuple):
    """Summary of one training epoch."""

    epoch: int
    train_loss: float  #: Mean KD objective of the epoch's student updates.
    dev_accuracy: float
    selection_rates: typing.List[float]  #: Mean selection probability per teacher on the train split.
    region_selection_rates: typing.Dict[int, typing.List[float]]  #: The same per region tag.


@dataclasses.dataclass
class RunTrace:
    """Everything recorded while training one student."""

    num_teachers: int
    epochs: typing.List[EpochRecord] = dataclasses.field(default_factory=list)
    batch_losses: typing.List[float] = dataclasses.field(default_factory=list)
    batch_rewards: typing.List[float] = dataclasses.field(default_factory=list)
    dev_subsample_accuracies: typing.List[float] = dataclasses.field(default_factory=list)
    pretrain_rewards: typing.List[float] = dataclasses.field(default_factory=list)
    best_epoch: int = 0
    test_accuracy: typing.Optional[float] = None

    @property
    def best_dev_accuracy(self) -> typing.Optional[float]:
        return self.epochs[self.best_epoch - 1].dev_accuracy if self.best_epoch else None

    @classmethod
    def from_kd_trace(
        cls,
        trace: KdTrace,
        num_teachers: int = 0,
    ) -> "RunTrace":
        """Wrap the trace of a fixed-ensemble run, which has no selection rates."""
        epochs = [
            EpochRecord(idx, loss, acc, [], {})
            for idx, (loss, acc) in enumerate(zip(trace.epoch_losses, trace.dev_accuracies), start=1)
        ]
        return cls(num_teachers, epochs, list(trace.batch_losses), best_epoch=trace.best_epoch)

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "num_teachers": self.num_teachers,
            "best_epoch": self.best_epoch,
            "best_dev_accuracy": self.best_dev_accuracy,
            "test_accuracy": self.test_accuracy,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "train_loss": e.train_loss,
                    "dev_accuracy": e.dev_accuracy,
                    "selection_rates": e.selection_rates,
                    "region_selection_rates": {str(r): v for r, v in e.region_selection_rates.items()},
                }
                for e in self.epochs
            ],
            "batch_losses": self.batch_losses,
            "batch_rewards": self.batch_rewards,
            "dev_subsample_accuracies": self.dev_subsample_accuracies,
            "pretrain_rewards": self.pretrain_rewards,
        }

    @classmethod
    def from_dict(
        cls,
        data: typing.Dict[str, typing.Any],
    ) -> "RunTrace":
        epochs = [
            EpochRecord(
                e["epoch"],
                e["train_loss"],
                e["dev_accuracy"],
                e["selection_rates"],
                {int(r): v for r, v in e["region_selection_rates"].items()},
            )
            for e in data["epochs"]
        ]
        return cls(
            num_teachers=data["num_teachers"],
            epochs=epochs,
            batch_losses=data["batch_losses"],
            batch_rewards=data["batch_rewards"],
            dev_subsample_accuracies=data["dev_subsample_accuracies"],
            pretrain_rewards=data["pretrain_rewards"],
            best_epoch=data["best_epoch"],
            test_accuracy=data["test_accuracy"],
        )

    def save(
        self,
        path: PathType,
    ) -> None:
        with open(path, mode="w", encoding="utf-8") as fd:
            json.dump(self.to_dict(), fd, indent=2, sort_keys=True)

    @classmethod
    def load(
        cls,
        path: PathType,
    ) -> "RunTrace":
        """Read a trace written by :meth:`save`.

        Raises:
            TraceFileError: The file is missing or is not a trace.
        """
        try:
            with open(path, mode="r", encoding="utf-8") as fd:
                return cls.from_dict(json.load(fd))
        except OSError as e:
            raise TraceFileError(str(path), e.strerror or str(e)) from e
        except (ValueError, KeyError, TypeError, AttributeError) as e:
            raise TraceFileError(str(path), f"not a run trace ({e})") from e


class RlkdResult(typing.NamedTuple):
    """Outcome of :func:`run_rlkd`."""

    student: MlpClassifier
    params: TeacherSelectorParams
    trace: RunTrace


def _check_coverage(
    teacher_preds: TeacherPredictions,
    dataset: Dataset,
) -> None:
    teacher_preds.positions(dataset.ids)
    if teacher_preds.num_classes != dataset.num_classes:
        raise InvalidArgumentError(
            "teacher_preds", f"has {teacher_preds.num_classes} classes, {dataset.name} has {dataset.num_classes}"
        )


def _dev_subsample(
    dev: Dataset,
    config: RewardConfig,
) -> Dataset:
    size = min(config.dev_subsample_size, len(dev))
    positions = np.sort(SeededRng(config.dev_seed, "dev-subsample").choice(len(dev), size))
    return dev.subset(positions, f"{dev.name}-subsample")


def _selection_rates(
    params: TeacherSelectorParams,
    states: np.ndarray,
    regions: typing.Optional[np.ndarray],
) -> typing.Tuple[typing.List[float], typing.Dict[int, typing.List[float]]]:
    profile = selection_profile(params, states, regions)
    return [float(v) for v in profile.overall], {r: [float(v) for v in p] for r, p in profile.per_region.items()}


def _update_selector(
    params: TeacherSelectorParams,
    history: EpisodeHistory,
    reward: float,
    config: RlkdConfig,
    baseline: typing.Optional[RewardBaseline],
) -> TeacherSelectorParams:
    if config.policy_learning_rate == 0:
        return params

    signal = baseline.advantage(reward) if baseline else reward
    return policy_update(params, history, signal, config.policy_learning_rate, config.gradient_mode)


def pretrain_student(
    student: MlpClassifier,
    teacher_preds: TeacherPredictions,
    config: RlkdConfig,
    train: Dataset,
    dev: Dataset,
) -> typing.Tuple[MlpClassifier, KdTrace]:
    """Distil the uniform ensemble of all teachers for the pretraining epochs."""
    kd = dataclasses.replace(config.kd, epochs=config.student_pretrain_epochs)
    return vanilla_kd_train(student, teacher_preds, EnsembleStrategy.uniform(), kd, train, dev)


def pretrain_selector(
    params: TeacherSelectorParams,
    teacher_preds: TeacherPredictions,
    train: Dataset,
    config: RlkdConfig,
    student: typing.Optional[MlpClassifier] = None,
    dev: typing.Optional[Dataset] = None,
    representation: Representation = raw_features,
) -> typing.Tuple[TeacherSelectorParams, typing.List[float]]:
    """Train the selector before the student is involved.

    With the ensemble reward an episode's reward is minus the mean hard cross
    entropy of the average of the selected temperature 1 rows, over the
    instances with at least one selected teacher. With the student reward it
    is the configured reward of the fixed pretrained ``student`` distilled
    from the selected teachers.

    Args:
        params: The initial agents.
        teacher_preds: Predictions covering ``train``.
        train: The training split.
        config: The run settings.
        student: The pretrained student, needed for the student reward.
        dev: The dev split, needed for the student reward with r3.
        representation: Maps features to the state representation.

    Returns:
        Tuple[TeacherSelectorParams, List[float]]: The agents and every
            episode's reward.
    """
    _check_coverage(teacher_preds, train)
    use_student = config.selector_pretrain_reward == SelectorPretrainReward.student
    if use_student and student is None:
        raise InvalidArgumentError("student", "the student pretraining reward needs the pretrained student")

    dev_accuracy = None
    if use_student and config.reward.variant == RewardVariant.r3:
        if dev is None:
            raise InvalidArgumentError("dev", "reward r3 needs the dev split")
        dev_accuracy = evaluate_accuracy(typing.cast(MlpClassifier, student), _dev_subsample(dev, config.reward))

    shuffle_rng = SeededRng(config.seed, "selector-pretrain-shuffle")
    action_rng = SeededRng(config.seed, "selector-pretrain-actions")
    baseline = RewardBaseline(config.reward.baseline_decay) if config.reward.baseline_decay is not None else None
    history = EpisodeHistory()
    rewards: typing.List[float] = []

    for epoch in range(1, config.selector_pretrain_epochs + 1):
        epoch_actions = action_rng.child(f"epoch-{epoch}")
        epoch_rewards: typing.List[float] = []
        for batch_idx, batch in enumerate(train.batches(config.kd.batch_size, shuffle_rng.child(f"epoch-{epoch}")), 1):
            states = build_states(representation(batch.features), teacher_preds, batch.ids)
            actions, probs = sample_batch_actions(params, states, epoch_actions.child(f"batch-{batch_idx}"))
            history.record(batch.ids, states, actions, probs)
            mask = actions.astype(bool)
            selected = mask.any(axis=1)

            if use_student:
                targets = selected_soft_labels(batch.ids, teacher_preds, mask)
                loss, _ = kd_loss(
                    typing.cast(MlpClassifier, student), batch, targets, selected, config.kd, with_gradients=False
                )
                reward = compute_reward(config.reward, loss.ground_truth, loss.distillation, dev_accuracy)
            elif selected.any():
                averaged = selected_soft_labels(batch.ids, teacher_preds, mask, temperature_one=True)
                reward = -float(np.mean(hard_cross_entropies(batch.labels[selected], averaged[selected])))
            else:
                reward = 0.0

            epoch_rewards.append(reward)
            params = _update_selector(params, history, reward, config, baseline)
            history.clear()

        rewards.extend(epoch_rewards)
        log.info("Selector pretraining epoch %d: mean reward %.6f", epoch, float(np.mean(epoch_rewards)))

    return params, rewards


def joint_train(
    student: MlpClassifier,
    params: TeacherSelectorParams,
    teacher_preds: TeacherPredictions,
    train: Dataset,
    dev: Dataset,
    config: RlkdConfig,
    representation: Representation = raw_features,
) -> typing.Tuple[MlpClassifier, TeacherSelectorParams, RunTrace]:
    """Train the student and the selector batch by batch.

    Every batch is one episode. The selector samples the teachers of each
    instance, the student takes one step on the combined objective with the
    average of the selected soft labels as target and the selector is updated
    with the reward of the updated student. An instance without any selected
    teacher trains on its hard label only and its decisions are not rewarded.
    With the alternating schedule odd batches only update the student and
    even batches only the selector.

    The batch order follows ``config.kd.shuffle_rng()`` like
    :func:`rlkd.vanilla_kd_train`, so a selector that always selects every
    teacher reproduces uniform ensemble distillation batch for batch.

    Args:
        student: The pretrained student, left untouched.
        params: The pretrained agents.
        teacher_preds: Predictions covering ``train``.
        train: The training split.
        dev: The split used for epoch selection and the r3 reward.
        config: The run settings.
        representation: Maps features to the state representation.

    Returns:
        Tuple[MlpClassifier, TeacherSelectorParams, RunTrace]: The student of
            the best dev epoch, the final agents and the trace.

    Raises:
        NumericDivergenceError: A student loss was not finite.
    """
    _check_coverage(teacher_preds, train)
    if abs(teacher_preds.temperature - config.kd.temperature) > 1e-12:
        raise InvalidArgumentError(
            "teacher_preds",
            f"soft rows are at T={teacher_preds.temperature} but the student uses T={config.kd.temperature}",
        )

    kd = config.kd
    model = student.copy()
    optimizer = kd.optimizer.create(model)
    shuffle_rng = kd.shuffle_rng()
    action_rng = SeededRng(config.seed, "selector-actions")
    baseline = RewardBaseline(config.reward.baseline_decay) if config.reward.baseline_decay is not None else None
    dev_subset = _dev_subsample(dev, config.reward) if config.reward.variant == RewardVariant.r3 else None
    train_states = build_states(representation(train.features), teacher_preds, train.ids)
    history = EpisodeHistory()
    trace = RunTrace(num_teachers=teacher_preds.num_teachers)
    best = model.copy()
    alternating = config.schedule == Schedule.alternating

    for epoch in range(1, config.epochs + 1):
        total = 0.0
        seen = 0
        epoch_actions = action_rng.child(f"epoch-{epoch}")
        for batch_idx, batch in enumerate(train.batches(kd.batch_size, shuffle_rng.child(f"epoch-{epoch}")), 1):
            states = build_states(representation(batch.features), teacher_preds, batch.ids)
            actions, probs = sample_batch_actions(params, states, epoch_actions.child(f"batch-{batch_idx}"))
            history.record(batch.ids, states, actions, probs)
            mask = actions.astype(bool)
            selected = mask.any(axis=1)
            targets = selected_soft_labels(batch.ids, teacher_preds, mask)

            if not alternating or batch_idx % 2 == 1:
                loss, grads = kd_loss(model, batch, targets, selected, kd)
                if not math.isfinite(loss.objective):
                    raise NumericDivergenceError("joint_train", epoch, batch_idx)

                optimizer.step(model, typing.cast(Gradients, grads))
                trace.batch_losses.append(loss.objective)
                total += loss.objective * batch.size
                seen += batch.size
                log.debug(
                    "Epoch %d batch %d: %d of %d instances selected a teacher",
                    epoch,
                    batch_idx,
                    int(selected.sum()),
                    batch.size,
                )

            if not alternating or batch_idx % 2 == 0:
                after, _ = kd_loss(model, batch, targets, selected, kd, with_gradients=False)
                dev_accuracy = None
                if dev_subset is not None:
                    dev_accuracy = evaluate_accuracy(model, dev_subset)
                    trace.dev_subsample_accuracies.append(dev_accuracy)

                reward = compute_reward(config.reward, after.ground_truth, after.distillation, dev_accuracy)
                trace.batch_rewards.append(reward)
                params = _update_selector(params, history, reward, config, baseline)

            history.clear()

        epoch_accuracy = evaluate_accuracy(model, dev)
        rates, region_rates = _selection_rates(params, train_states, train.regions)
        trace.epochs.append(EpochRecord(epoch, total / seen, epoch_accuracy, rates, region_rates))
        log.info(
            "Joint epoch %d: loss %.6f, dev accuracy %.4f, selection rates %s",
            epoch,
            total / seen,
            epoch_accuracy,
            ", ".join(f"{r:.3f}" for r in rates),
        )

        if trace.best_epoch == 0 or epoch_accuracy > typing.cast(float, trace.best_dev_accuracy):
            best = model.copy()
            trace.best_epoch = epoch

    return best, params, trace


def run_rlkd(
    train: Dataset,
    dev: Dataset,
    test: Dataset,
    teachers: typing.Union[typing.Sequence[MlpClassifier], TeacherPredictions],
    student: MlpClassifier,
    config: RlkdConfig,
    output_dir: typing.Optional[PathType] = None,
    representation: Representation = raw_features,
) -> RlkdResult:
    """Run the full pipeline.

    Computes the teacher predictions when given a pool, pretrains the student
    and the selector, trains them jointly and evaluates the student on the
    test split. With ``output_dir`` set the student, the policy and the trace
    are written there as ``student.json``, ``policy.json`` and
    ``trace.json``.
    """
    if isinstance(teachers, TeacherPredictions):
        teacher_preds = teachers
    else:
        teacher_preds = compute_teacher_predictions(teachers, train, config.kd.temperature)

    pretrained, _ = pretrain_student(student, teacher_preds, config, train, dev)
    rep_dim = representation(train.features[:1]).shape[1]
    params = TeacherSelectorParams.zeros(
        teacher_preds.num_teachers,
        state_dim(rep_dim, teacher_preds.num_classes, teacher_preds.num_teachers),
    )
    params, pretrain_rewards = pretrain_selector(
        params, teacher_preds, train, config, student=pretrained, dev=dev, representation=representation
    )
    final, params, trace = joint_train(pretrained, params, teacher_preds, train, dev, config, representation)
    trace.pretrain_rewards = pretrain_rewards
    trace.test_accuracy = evaluate_accuracy(final, test)
    log.info("RL-KD run finished: best epoch %d, test accuracy %.4f", trace.best_epoch, trace.test_accuracy)

    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        save_model(final, os.path.join(output_dir, "student.json"))
        save_policy(params, os.path.join(output_dir, "policy.json"))
        trace.save(os.path.join(output_dir, "trace.json"))

    return RlkdResult(final, params, trace)


__all__ = [
    "EpochRecord",
    "RlkdConfig",
    "RlkdResult",
    "RunTrace",
    "Schedule",
    "SelectorPretrainReward",
    "joint_train",
    "pretrain_selector",
    "pretrain_student",
    "raw_features",
    "run_rlkd",
]
