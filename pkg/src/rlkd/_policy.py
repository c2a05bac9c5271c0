# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""The teacher selector.

One logistic agent per teacher decides whether that teacher's soft label is
used for an instance. Every agent sees the same state vector::

    [ representation (d) | teacher 1 probs (C) ... teacher K probs (C) | teacher 1 loss ... teacher K loss ]

and the agents are trained with a Monte-Carlo policy gradient on a reward
shared by all the decisions of one batch.
"""

import dataclasses
import enum
import json
import logging
import os
import typing

import numpy as np

from rlkd._exceptions import InvalidArgumentError, NumericError
from rlkd._numerics import SeededRng, as_real_array, sigmoid
from rlkd._predictions import TeacherPredictions

log = logging.getLogger(__name__)

PathType = typing.Union[str, "os.PathLike[str]"]


def state_dim(
    representation_dim: int,
    num_classes: int,
    num_teachers: int,
) -> int:
    """Length ``d + (C + 1) * K`` of a state vector."""
    return representation_dim + (num_classes + 1) * num_teachers


class PolicyState:
    """State vector of one instance.

    Args:
        vector: The concatenated features.
        representation_dim: The length d of the representation segment.
        num_teachers: The number of teachers K.
        num_classes: The number of classes C.
    """

    def __init__(
        self,
        vector: typing.Any,
        representation_dim: int,
        num_teachers: int,
        num_classes: int,
    ) -> None:
        self.vector = np.array(as_real_array(vector, "vector"), dtype=np.float64).reshape(-1)
        self.representation_dim = int(representation_dim)
        self.num_teachers = int(num_teachers)
        self.num_classes = int(num_classes)

        expected = state_dim(self.representation_dim, self.num_classes, self.num_teachers)
        if self.vector.shape != (expected,):
            raise InvalidArgumentError("vector", f"expected length {expected}, got {self.vector.size}")

        probs = self.teacher_probabilities
        if np.any(probs < 0) or np.any(probs > 1) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
            raise InvalidArgumentError("vector", "teacher probability segments must be probability vectors")

        if np.any(self.teacher_losses < 0):
            raise InvalidArgumentError("vector", "teacher losses must be nonnegative")

        self.vector.setflags(write=False)

    def __len__(self) -> int:
        return int(self.vector.size)

    def __eq__(
        self,
        other: object,
    ) -> bool:
        if not isinstance(other, PolicyState):
            return NotImplemented

        return (
            self.representation_dim == other.representation_dim
            and self.num_teachers == other.num_teachers
            and self.num_classes == other.num_classes
            and np.array_equal(self.vector, other.vector)
        )

    def __repr__(self) -> str:
        return (
            f"<{type(self).__name__} representation_dim={self.representation_dim} "
            f"num_teachers={self.num_teachers} num_classes={self.num_classes}>"
        )

    @property
    def representation(self) -> np.ndarray:
        return self.vector[: self.representation_dim]

    @property
    def teacher_probabilities(self) -> np.ndarray:
        """The temperature 1 rows, shape ``(K, C)``."""
        start = self.representation_dim
        end = start + self.num_teachers * self.num_classes
        return self.vector[start:end].reshape(self.num_teachers, self.num_classes)

    @property
    def teacher_losses(self) -> np.ndarray:
        return self.vector[self.representation_dim + self.num_teachers * self.num_classes :]

    def to_json(self) -> str:
        """Serialize with hexadecimal floats so :meth:`from_json` is exact."""
        return json.dumps(
            {
                "representation_dim": self.representation_dim,
                "num_teachers": self.num_teachers,
                "num_classes": self.num_classes,
                "vector": [float(v).hex() for v in self.vector],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(
        cls,
        data: str,
    ) -> "PolicyState":
        obj = json.loads(data)
        return cls(
            vector=[float.fromhex(v) for v in obj["vector"]],
            representation_dim=obj["representation_dim"],
            num_teachers=obj["num_teachers"],
            num_classes=obj["num_classes"],
        )


def build_states(
    representations: typing.Any,
    teacher_preds: TeacherPredictions,
    instance_ids: typing.Iterable[int],
) -> np.ndarray:
    """State vectors of a batch of instances as a matrix ``(n, D)``.

    Args:
        representations: The instance representations ``(n, d)``.
        teacher_preds: Supplies the temperature 1 rows and the losses.
        instance_ids: The ids of the instances in row order.

    Raises:
        CoverageError: An instance has no teacher predictions.
    """
    reps = np.atleast_2d(as_real_array(representations, "representations"))
    positions = teacher_preds.positions(instance_ids)
    if len(positions) != reps.shape[0]:
        raise InvalidArgumentError("instance_ids", f"need {reps.shape[0]} ids, got {len(positions)}")

    probs = teacher_preds.probabilities[positions].reshape(len(positions), -1)
    return np.concatenate([reps, probs, teacher_preds.losses[positions]], axis=1)


def build_state(
    representation: typing.Any,
    teacher_preds: TeacherPredictions,
    instance_id: int,
) -> PolicyState:
    """The state vector of one instance."""
    rep = as_real_array(representation, "representation").reshape(-1)
    vector = build_states(rep[None, :], teacher_preds, [instance_id])[0]
    return PolicyState(vector, rep.size, teacher_preds.num_teachers, teacher_preds.num_classes)


def _state_matrix(
    states: typing.Any,
) -> np.ndarray:
    if isinstance(states, PolicyState):
        return states.vector[None, :]

    if isinstance(states, (list, tuple)) and states and isinstance(states[0], PolicyState):
        return np.stack([s.vector for s in states])

    return np.atleast_2d(np.asarray(states, dtype=np.float64))


class TeacherSelectorParams:
    """Parameters of the K logistic agents.

    Agent k selects its teacher with probability
    ``sigmoid(weights[k - 1] . F + biases[k - 1])``. Instances are immutable,
    :func:`policy_update` returns a new one.

    Args:
        weights: The agent weight vectors ``(K, D)``.
        biases: The agent biases ``(K,)``.
    """

    def __init__(
        self,
        weights: typing.Any,
        biases: typing.Any,
    ) -> None:
        self.weights = np.array(weights, dtype=np.float64)
        self.biases = np.array(biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] < 1 or self.biases.shape != (self.weights.shape[0],):
            raise InvalidArgumentError("weights", "need a (K, D) weight matrix and K biases with K >= 1")

        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise InvalidArgumentError("weights", "parameters must be finite")

        self.weights.setflags(write=False)
        self.biases.setflags(write=False)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} num_teachers={self.num_teachers} state_dim={self.state_dim}>"

    def __eq__(
        self,
        other: object,
    ) -> bool:
        if not isinstance(other, TeacherSelectorParams):
            return NotImplemented

        return np.array_equal(self.weights, other.weights) and np.array_equal(self.biases, other.biases)

    @classmethod
    def zeros(
        cls,
        num_teachers: int,
        dim: int,
        bias: float = 0.0,
    ) -> "TeacherSelectorParams":
        """Agents that ignore the state, every teacher picked with ``sigmoid(bias)``."""
        return cls(np.zeros((num_teachers, dim)), np.full(num_teachers, float(bias)))

    @property
    def num_teachers(self) -> int:
        return int(self.weights.shape[0])

    @property
    def state_dim(self) -> int:
        return int(self.weights.shape[1])

    def logits(
        self,
        states: typing.Any,
    ) -> np.ndarray:
        """``A_k . F + b_k`` for every state row and agent, shape ``(n, K)``."""
        matrix = _state_matrix(states)
        if matrix.shape[1] != self.state_dim:
            raise InvalidArgumentError("state", f"expected length {self.state_dim}, got {matrix.shape[1]}")

        return typing.cast(np.ndarray, matrix @ self.weights.T + self.biases)

    def selection_probabilities(
        self,
        states: typing.Any,
    ) -> np.ndarray:
        """Probability of action 1 for every state row and agent."""
        return typing.cast(np.ndarray, sigmoid(self.logits(states)))


def action_prob(
    params: TeacherSelectorParams,
    teacher: int,
    state: typing.Any,
    action: int,
) -> float:
    """Probability that agent ``teacher`` takes ``action`` in ``state``."""
    if not 1 <= teacher <= params.num_teachers:
        raise InvalidArgumentError("teacher", f"must be in [1, {params.num_teachers}], got {teacher}")

    if action not in (0, 1):
        raise InvalidArgumentError("action", f"must be 0 or 1, got {action}")

    z = float(params.logits(state)[0, teacher - 1])
    # 1 - sigmoid(z) loses precision for large z, sigmoid(-z) does not.
    return float(sigmoid(z) if action == 1 else sigmoid(-z))


def sample_batch_actions(
    params: TeacherSelectorParams,
    states: typing.Any,
    rng: SeededRng,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Draw every agent's action for every state row.

    Returns:
        Tuple[np.ndarray, np.ndarray]: The 0/1 actions ``(n, K)`` and the
            selection probabilities they were drawn with.
    """
    probs = params.selection_probabilities(states)
    actions = (rng.random(probs.shape) < probs).astype(np.int8)
    return actions, probs


def sample_actions(
    params: TeacherSelectorParams,
    state: typing.Any,
    rng: SeededRng,
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Draw the K independent Bernoulli actions for one state."""
    actions, probs = sample_batch_actions(params, state, rng)
    return actions[0], probs[0]


class RewardVariant(enum.Enum):
    """The delayed reward of an episode."""

    r1 = "r1"  #: Negative hard label loss of the student.
    r2 = "r2"  #: Negative hard label plus distillation loss.
    r3 = "r3"  #: ``r2`` mixed with dev accuracy by gamma.


@dataclasses.dataclass(frozen=True)
class RewardConfig:
    """Reward settings.

    Attributes:
        variant: The reward.
        gamma: The r3 mixing weight, required for r3.
        dev_subsample_size: Size of the fixed dev subsample r3 evaluates.
        dev_seed: Seed of the dev subsample draw.
        baseline_decay: Decay of the moving-average reward baseline, no
            baseline when ``None``.
    """

    variant: RewardVariant = RewardVariant.r1
    gamma: typing.Optional[float] = None
    dev_subsample_size: int = 256
    dev_seed: int = 0
    baseline_decay: typing.Optional[float] = None

    def __post_init__(self) -> None:
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise InvalidArgumentError("gamma", f"must be in [0, 1], got {self.gamma}")

        if self.variant == RewardVariant.r3 and self.gamma is None:
            raise InvalidArgumentError("gamma", "reward r3 needs gamma")

        if self.dev_subsample_size < 1:
            raise InvalidArgumentError("dev_subsample_size", f"must be at least 1, got {self.dev_subsample_size}")

        if self.baseline_decay is not None and not 0.0 <= self.baseline_decay < 1.0:
            raise InvalidArgumentError("baseline_decay", f"must be in [0, 1), got {self.baseline_decay}")


def compute_reward(
    config: RewardConfig,
    ground_truth: float,
    distillation: float,
    dev_accuracy: typing.Optional[float] = None,
) -> float:
    """The reward of an episode from its batch-mean losses.

    Args:
        config: Selects the variant and gamma.
        ground_truth: The batch-mean hard label loss.
        distillation: The batch-mean distillation loss.
        dev_accuracy: The dev accuracy, given exactly for r3.

    Returns:
        float: ``-ce`` for r1, ``-ce - dl`` for r2 and
            ``gamma * (-ce - dl) + (1 - gamma) * dev_accuracy`` for r3.
    """
    if (dev_accuracy is None) == (config.variant == RewardVariant.r3):
        raise InvalidArgumentError(
            "dev_accuracy", f"must be given exactly for reward r3, variant is {config.variant.value}"
        )

    if config.variant == RewardVariant.r1:
        return -ground_truth

    if config.variant == RewardVariant.r2:
        return -ground_truth - distillation

    gamma = typing.cast(float, config.gamma)
    return gamma * (-ground_truth - distillation) + (1.0 - gamma) * typing.cast(float, dev_accuracy)


class RewardBaseline:
    """Exponential moving average of past rewards.

    Args:
        decay: Weight of the previous average.

    Attributes:
        value: The current average, ``None`` until the first reward.
    """

    def __init__(
        self,
        decay: float = 0.9,
    ) -> None:
        if not 0.0 <= decay < 1.0:
            raise InvalidArgumentError("decay", f"must be in [0, 1), got {decay}")

        self.decay = decay
        self.value: typing.Optional[float] = None

    def advantage(
        self,
        reward: float,
    ) -> float:
        """The reward minus the current average, then fold the reward in.

        The first reward only initialises the average and has advantage 0.
        """
        if self.value is None:
            self.value = reward
            return 0.0

        advantage = reward - self.value
        self.value = self.decay * self.value + (1.0 - self.decay) * reward
        return advantage


class EpisodeStep(typing.NamedTuple):
    """One stored decision."""

    instance_id: int
    teacher: int  #: 1-based teacher index.
    state: np.ndarray
    action: int
    action_probability: float  #: Probability of the taken action when it was sampled.


class EpisodeHistory:
    """Decisions of one episode.

    Stores a batch at a time: the states, the actions of every agent and the
    selection probabilities at sampling time. ``rewarded`` marks the
    instances with at least one selected teacher, the only ones a reward is
    credited to.
    """

    def __init__(self) -> None:
        self.clear()

    def __len__(self) -> int:
        return int(self.actions.size)

    def __iter__(self) -> typing.Iterator[EpisodeStep]:
        for row, instance_id in enumerate(self.ids):
            for k in range(self.actions.shape[1]):
                action = int(self.actions[row, k])
                prob = float(self.probabilities[row, k])
                yield EpisodeStep(
                    int(instance_id), k + 1, self.states[row], action, prob if action else 1.0 - prob
                )

    @property
    def rewarded(self) -> np.ndarray:
        return typing.cast(np.ndarray, self.actions.any(axis=1))

    def record(
        self,
        instance_ids: typing.Any,
        states: np.ndarray,
        actions: np.ndarray,
        probabilities: np.ndarray,
    ) -> None:
        """Append the decisions taken for a batch of instances."""
        ids = np.asarray(instance_ids, dtype=np.int64)
        if actions.shape != probabilities.shape or actions.shape[0] != len(ids) or states.shape[0] != len(ids):
            raise InvalidArgumentError("actions", "ids, states, actions and probabilities must align")

        if len(self.ids):
            states = np.concatenate([self.states, states])
            actions = np.concatenate([self.actions, actions])
            probabilities = np.concatenate([self.probabilities, probabilities])
            ids = np.concatenate([self.ids, ids])

        self.ids = ids
        self.states = states
        self.actions = actions.astype(np.int8)
        self.probabilities = probabilities

    def clear(self) -> None:
        self.ids = np.empty(0, dtype=np.int64)
        self.states = np.empty((0, 0))
        self.actions = np.empty((0, 0), dtype=np.int8)
        self.probabilities = np.empty((0, 0))


class GradientMode(enum.Enum):
    """Estimator of the policy gradient."""

    log = "log-gradient"  #: Reward times the gradient of log pi.
    literal = "literal"  #: Reward times the gradient of pi itself.


def policy_update(
    params: TeacherSelectorParams,
    history: EpisodeHistory,
    reward: float,
    beta: float,
    mode: GradientMode = GradientMode.log,
) -> TeacherSelectorParams:
    """Apply one episode's policy gradient step.

    For every rewarded decision ``(s, a, k)`` agent k moves by
    ``beta * reward * g * [F; 1]`` where ``g`` is ``a - sigma`` in log mode
    and ``(2a - 1) * sigma * (1 - sigma)`` in literal mode. The step is
    summed over the episode and applied once.

    Decisions of instances where no agent selected a teacher carry zero
    reward and add nothing to the step. Both selector pre-training and
    joint training go through this mask, so neither caller filters the
    history itself.

    Args:
        params: The current agents.
        history: The episode's decisions.
        reward: The episode's reward, or its advantage over a baseline.
        beta: The policy learning rate.
        mode: The gradient estimator.

    Returns:
        TeacherSelectorParams: The updated agents.

    Raises:
        NumericError: The update is not finite.
    """
    if not beta > 0:
        raise InvalidArgumentError("beta", f"must be positive, got {beta}")

    if not len(history):
        return params

    if history.actions.shape[1] != params.num_teachers:
        raise InvalidArgumentError(
            "history", f"has {history.actions.shape[1]} agents, params have {params.num_teachers}"
        )

    sigma = params.selection_probabilities(history.states)
    actions = history.actions.astype(np.float64)
    if mode == GradientMode.log:
        coefficients = actions - sigma
    else:
        coefficients = (2.0 * actions - 1.0) * sigma * (1.0 - sigma)

    coefficients = coefficients * history.rewarded[:, None]
    delta_weights = beta * reward * (coefficients.T @ history.states)
    delta_biases = beta * reward * coefficients.sum(axis=0)

    if not (np.all(np.isfinite(delta_weights)) and np.all(np.isfinite(delta_biases))):
        raise NumericError("policy_update", f"update with reward {reward} is not finite")

    log.debug("Policy update over %d decisions with reward %.6f", len(history), reward)
    return TeacherSelectorParams(params.weights + delta_weights, params.biases + delta_biases)


class SelectionProfile(typing.NamedTuple):
    """Mean selection probability of every teacher."""

    overall: np.ndarray  #: Shape ``(K,)``.
    per_region: typing.Dict[int, np.ndarray]  #: Region tag to a ``(K,)`` array.


def selection_profile(
    params: TeacherSelectorParams,
    states: np.ndarray,
    region_tags: typing.Optional[typing.Any] = None,
) -> SelectionProfile:
    """Mean selection probabilities over states, overall and per region."""
    probs = params.selection_probabilities(states)
    per_region: typing.Dict[int, np.ndarray] = {}
    if region_tags is not None:
        tags = np.asarray(region_tags)
        for region in sorted({int(r) for r in tags}):
            per_region[region] = probs[tags == region].mean(axis=0)

    return SelectionProfile(probs.mean(axis=0), per_region)


def save_policy(
    params: TeacherSelectorParams,
    path: PathType,
) -> None:
    """Write a policy checkpoint with hexadecimal floats."""
    data = {
        "format": "rlkd-policy",
        "num_teachers": params.num_teachers,
        "state_dim": params.state_dim,
        "weights": [[float(v).hex() for v in row] for row in params.weights],
        "biases": [float(v).hex() for v in params.biases],
    }
    with open(path, mode="w", encoding="utf-8") as fd:
        json.dump(data, fd, indent=1)


def load_policy(
    path: PathType,
) -> TeacherSelectorParams:
    """Read a checkpoint written by :func:`save_policy`."""
    with open(path, mode="r", encoding="utf-8") as fd:
        data = json.load(fd)

    if data.get("format") != "rlkd-policy":
        raise InvalidArgumentError("path", f"{path} is not an rlkd policy checkpoint")

    weights = [[float.fromhex(v) for v in row] for row in data["weights"]]
    biases = [float.fromhex(v) for v in data["biases"]]
    params = TeacherSelectorParams(weights, biases)
    if params.num_teachers != data["num_teachers"] or params.state_dim != data["state_dim"]:
        raise InvalidArgumentError("path", f"{path} has inconsistent policy dimensions")

    return params


__all__ = [
    "EpisodeHistory",
    "EpisodeStep",
    "GradientMode",
    "PolicyState",
    "RewardBaseline",
    "RewardConfig",
    "RewardVariant",
    "SelectionProfile",
    "TeacherSelectorParams",
    "action_prob",
    "build_state",
    "build_states",
    "compute_reward",
    "load_policy",
    "policy_update",
    "sample_actions",
    "sample_batch_actions",
    "save_policy",
    "selection_profile",
    "state_dim",
]
