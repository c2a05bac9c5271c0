# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

"""Declarative experiments, metrics reports and their comparison.

An experiment config is a JSON object with the keys ``name``, ``method``,
``teacher`` (vkd-single), ``weights`` (vkd-weighted), ``seeds``,
``benchmark``, ``teachers``, ``student`` and ``hyperparameters``. Unknown keys
are rejected. See :func:`parse_experiment_config` for the fields of every
section.

A metrics report, written as ``report.json`` by :func:`run_experiment`, has
this layout (``REPORT_SCHEMA``)::

    {
        "schema_version": 1,
        "name": str,
        "method": str,                     # method label, e.g. "vkd-single-2"
        "config_hash": str,                # sha256 of the normalised config
        "benchmark_hash": str,             # sha256 of benchmark and teacher pool
        "seeds": [int, ...],
        "runs": [
            {"seed": int, "dev_accuracy": float, "test_accuracy": float, "trace": str},
        ],
        "summary": {
            "dev_accuracy": {"mean": float, "stdev": float, "count": int},
            "test_accuracy": {"mean": float, "stdev": float, "count": int},
        },
        "pairwise": [],                    # filled by compare
        "teacher_accuracies": {str: float},  # teacher ensembles on the test split
        "wall_clock_seconds": float,
    }

Accuracies are fractions in [0, 1]; ``trace`` is relative to the report.
Everything but ``wall_clock_seconds`` is a function of the config.
"""

import concurrent.futures
import csv
import dataclasses
import enum
import hashlib
import json
import logging
import os
import time
import typing

import numpy as np

from rlkd._datasets import (
    Dataset,
    generate_quadrant_benchmark,
    load_jsonl,
    load_teacher_logits,
    save_jsonl,
    save_teacher_logits,
)
from rlkd._distillation import (
    EnsembleStrategy,
    KdConfig,
    dev_accuracy_weights,
    evaluate_ensemble_accuracy,
    fit_lr_ensemble,
    vanilla_kd_train,
)
from rlkd._exceptions import (
    ConfigurationError,
    ExperimentRunError,
    IncompatibleReportsError,
    InvalidArgumentError,
)
from rlkd._models import (
    DEFAULT_LEARNING_RATES,
    STUDENT_ARCHITECTURES,
    MlpClassifier,
    OptimizerKind,
    OptimizerSpec,
    TeacherCorruptionSpec,
    build_classifier,
    compute_teacher_predictions,
    evaluate_accuracy,
    make_teacher_pool,
    save_model,
)
from rlkd._numerics import SeededRng
from rlkd._policy import GradientMode, RewardConfig, RewardVariant
from rlkd._predictions import TeacherPredictions
from rlkd._stats import summarize, welch_ttest
from rlkd._trainer import RlkdConfig, RunTrace, Schedule, SelectorPretrainReward, run_rlkd

log = logging.getLogger(__name__)

PathType = typing.Union[str, "os.PathLike[str]"]

REPORT_SCHEMA_VERSION = 1

TRANSFORMER_GRID: typing.Dict[str, typing.Tuple[float, ...]] = {
    "alpha": (0.2, 0.5, 0.7),
    "temperature": (5.0, 10.0, 20.0),
    "gamma": (0.3, 0.5, 0.7, 0.9),
    "learning_rate": (1e-5, 2e-5, 5e-5),
}
"""Hyperparameter grids of the transformer-scale setting."""

DESK_LEARNING_RATES: typing.Dict[str, float] = {k.value: v for k, v in DEFAULT_LEARNING_RATES.items()}
"""Default learning rate per optimizer for the MLP-scale setting."""


class Method(enum.Enum):
    """Student training methods an experiment can run."""

    ft = "ft"
    vkd_single = "vkd-single"
    vkd_uniform = "vkd-uniform"
    vkd_weighted = "vkd-weighted"
    vkd_rand_single = "vkd-rand-single"
    vkd_lr_train = "vkd-lr-train"
    vkd_lr_dev = "vkd-lr-dev"
    vkd_best_single = "vkd-best-single"
    rlkd_r1 = "rlkd-r1"
    rlkd_r2 = "rlkd-r2"
    rlkd_r3 = "rlkd-r3"

    @property
    def reward_variant(self) -> typing.Optional[RewardVariant]:
        """The reward of an RL-KD method, ``None`` for fixed ensembles."""
        if self.value.startswith("rlkd-"):
            return RewardVariant(self.value[len("rlkd-") :])

        return None


@dataclasses.dataclass(frozen=True)
class BenchmarkSpec:
    """Where the data comes from.

    ``kind`` is ``synthetic`` for the generated quadrant benchmark or
    ``files`` for JSON-lines splits plus one teacher-logit file.
    """

    kind: str = "synthetic"
    seed: int = 0
    n_per_split: typing.Tuple[int, int, int] = (8000, 2000, 2000)
    num_classes: int = 2
    num_regions: int = 4
    label_noise: float = 0.0
    feature_dim: int = 8
    train: typing.Optional[str] = None
    dev: typing.Optional[str] = None
    test: typing.Optional[str] = None
    teacher_logits: typing.Optional[str] = None


@dataclasses.dataclass(frozen=True)
class TeacherPoolSpec:
    """How the teacher pool of a synthetic benchmark is trained."""

    num_teachers: int = 4
    corrupt_regions: typing.Tuple[typing.Optional[int], ...] = (1, 2, 3, 4)
    hidden_layers: typing.Optional[typing.Tuple[typing.Tuple[int, ...], ...]] = None
    epochs: int = 20
    batch_size: int = 64
    optimizer: OptimizerKind = OptimizerKind.adam
    learning_rate: typing.Optional[float] = None
    seed: int = 0
    workers: int = 1


@dataclasses.dataclass(frozen=True)
class Hyperparameters:
    """Student, selector and ensemble-fitting settings."""

    alpha: float = 0.5
    temperature: float = 5.0
    scale_by_t_squared: bool = False
    epochs: int = 10
    batch_size: int = 64
    optimizer: OptimizerKind = OptimizerKind.adam
    learning_rate: typing.Optional[float] = None
    policy_learning_rate: float = 1e-3
    gamma: typing.Optional[float] = None
    student_pretrain_epochs: int = 5
    selector_pretrain_epochs: int = 3
    selector_pretrain_reward: SelectorPretrainReward = SelectorPretrainReward.ensemble
    schedule: Schedule = Schedule.joint
    gradient_mode: GradientMode = GradientMode.log
    dev_subsample_size: int = 256
    baseline_decay: typing.Optional[float] = None
    lr_iterations: int = 500
    lr_learning_rate: float = 0.5


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """A parsed experiment config.

    Attributes:
        method: The method to run.
        seeds: The run seeds.
        name: The report name.
        teacher: The teacher of vkd-single.
        weights: Explicit vkd-weighted weights, dev accuracy weights if unset.
        student: The hidden layer widths of the student.
        benchmark: The data source.
        teachers: The teacher pool.
        hyperparameters: The training settings.
        base_dir: Directory relative file paths are resolved against.
    """

    method: Method
    seeds: typing.Tuple[int, ...]
    name: str
    teacher: typing.Optional[int] = None
    weights: typing.Optional[typing.Tuple[float, ...]] = None
    student: typing.Tuple[int, ...] = STUDENT_ARCHITECTURES["small"]
    benchmark: BenchmarkSpec = BenchmarkSpec()
    teachers: TeacherPoolSpec = TeacherPoolSpec()
    hyperparameters: Hyperparameters = Hyperparameters()
    base_dir: str = "."

    @property
    def label(self) -> str:
        """The method label, with the teacher index for vkd-single."""
        if self.method == Method.vkd_single:
            return f"{self.method.value}-{self.teacher}"

        return self.method.value

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        """The normalised config, defaults filled in and enums as strings."""
        data = _jsonable(dataclasses.asdict(self))
        del data["base_dir"]
        return typing.cast(typing.Dict[str, typing.Any], data)

    @property
    def config_hash(self) -> str:
        return _hash_json(self.to_dict())


def _jsonable(
    value: typing.Any,
) -> typing.Any:
    if isinstance(value, enum.Enum):
        return value.value

    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}

    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]

    return value


def _hash_json(
    value: typing.Any,
) -> str:
    canonical = json.dumps(value, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _is_int(value: typing.Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_real(value: typing.Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and np.isfinite(value)


def _check_keys(
    data: typing.Any,
    section: str,
    known: typing.Iterable[str],
) -> typing.Dict[str, typing.Any]:
    if not isinstance(data, dict):
        raise ConfigurationError(section, "must be a JSON object")

    for key in data:
        if key not in known:
            raise ConfigurationError(f"{section}.{key}" if section else key, "is not a known field")

    return data


def _int_field(
    data: typing.Dict[str, typing.Any],
    key: str,
    section: str,
    default: int,
    minimum: int = 0,
) -> int:
    value = data.get(key, default)
    if not _is_int(value) or value < minimum:
        raise ConfigurationError(f"{section}.{key}", f"must be an integer >= {minimum}, got {value!r}")

    return int(value)


def _bool_field(
    data: typing.Dict[str, typing.Any],
    key: str,
    section: str,
    default: bool,
) -> bool:
    value = data.get(key, default)
    if not isinstance(value, bool):
        raise ConfigurationError(f"{section}.{key}", f"must be a boolean, got {value!r}")

    return value


def _real_field(
    data: typing.Dict[str, typing.Any],
    key: str,
    section: str,
    default: typing.Optional[float],
    low: float,
    high: float = float("inf"),
    low_inclusive: bool = True,
) -> typing.Optional[float]:
    value = data.get(key, default)
    if value is None and default is None:
        return None

    in_range = _is_real(value) and (value >= low if low_inclusive else value > low) and value <= high
    if not in_range:
        bound = "[" if low_inclusive else "("
        raise ConfigurationError(f"{section}.{key}", f"must be a real in {bound}{low}, {high}], got {value!r}")

    return float(value)


def _enum_field(
    data: typing.Dict[str, typing.Any],
    key: str,
    section: str,
    enum_type: typing.Type[typing.Any],
    default: typing.Any,
) -> typing.Any:
    value = data.get(key, default.value)
    try:
        return enum_type(value)
    except ValueError:
        choices = ", ".join(e.value for e in enum_type)
        raise ConfigurationError(f"{section}.{key}", f"must be one of {choices}, got {value!r}") from None


def _widths(
    value: typing.Any,
    field: str,
) -> typing.Tuple[int, ...]:
    if not isinstance(value, list) or not all(_is_int(w) and w >= 1 for w in value):
        raise ConfigurationError(field, f"must be a list of positive layer widths, got {value!r}")

    return tuple(value)


def _parse_benchmark(
    data: typing.Any,
) -> BenchmarkSpec:
    section = "benchmark"
    data = _check_keys(
        data,
        section,
        [
            "kind",
            "seed",
            "n_per_split",
            "num_classes",
            "num_regions",
            "label_noise",
            "feature_dim",
            "train",
            "dev",
            "test",
            "teacher_logits",
        ],
    )
    kind = data.get("kind", "synthetic")
    if kind == "files":
        paths = {}
        for key in ["train", "dev", "test", "teacher_logits"]:
            value = data.get(key)
            if not isinstance(value, str) or not value:
                raise ConfigurationError(f"{section}.{key}", "must be a file path for a files benchmark")

            paths[key] = value

        return BenchmarkSpec(kind="files", **paths)

    if kind != "synthetic":
        raise ConfigurationError(f"{section}.kind", f"must be synthetic or files, got {kind!r}")

    counts = data.get("n_per_split", [8000, 2000, 2000])
    if not isinstance(counts, list) or len(counts) != 3 or not all(_is_int(c) and c > 0 for c in counts):
        raise ConfigurationError(f"{section}.n_per_split", f"must be three positive counts, got {counts!r}")

    return BenchmarkSpec(
        kind="synthetic",
        seed=_int_field(data, "seed", section, 0),
        n_per_split=(counts[0], counts[1], counts[2]),
        num_classes=_int_field(data, "num_classes", section, 2, minimum=2),
        num_regions=_int_field(data, "num_regions", section, 4, minimum=2),
        label_noise=typing.cast(float, _real_field(data, "label_noise", section, 0.0, 0.0, 0.999999)),
        feature_dim=_int_field(data, "feature_dim", section, 8, minimum=2),
    )


def _parse_teachers(
    data: typing.Any,
    benchmark: BenchmarkSpec,
) -> TeacherPoolSpec:
    section = "teachers"
    data = _check_keys(
        data,
        section,
        [
            "num_teachers",
            "corrupt_regions",
            "hidden_layers",
            "epochs",
            "batch_size",
            "optimizer",
            "learning_rate",
            "seed",
            "workers",
        ],
    )
    num_teachers = _int_field(data, "num_teachers", section, 4, minimum=1)

    if "corrupt_regions" in data:
        regions = data["corrupt_regions"]
        valid = isinstance(regions, list) and len(regions) == num_teachers
        if not valid or not all(r is None or (_is_int(r) and 1 <= r <= benchmark.num_regions) for r in regions):
            raise ConfigurationError(
                f"{section}.corrupt_regions",
                f"must list {num_teachers} region tags in [1, {benchmark.num_regions}] or null",
            )
        corrupt = tuple(regions)
    elif benchmark.kind == "synthetic":
        corrupt = tuple(k if k <= benchmark.num_regions else None for k in range(1, num_teachers + 1))
    else:
        corrupt = (None,) * num_teachers

    hidden = None
    if "hidden_layers" in data:
        layers = data["hidden_layers"]
        if not isinstance(layers, list) or len(layers) != num_teachers:
            raise ConfigurationError(f"{section}.hidden_layers", f"must list the widths of {num_teachers} teachers")
        hidden = tuple(_widths(w, f"{section}.hidden_layers") for w in layers)

    return TeacherPoolSpec(
        num_teachers=num_teachers,
        corrupt_regions=corrupt,
        hidden_layers=hidden,
        epochs=_int_field(data, "epochs", section, 20),
        batch_size=_int_field(data, "batch_size", section, 64, minimum=1),
        optimizer=_enum_field(data, "optimizer", section, OptimizerKind, OptimizerKind.adam),
        learning_rate=_real_field(data, "learning_rate", section, None, 0.0, low_inclusive=False),
        seed=_int_field(data, "seed", section, 0),
        workers=_int_field(data, "workers", section, 1, minimum=1),
    )


def _parse_hyperparameters(
    data: typing.Any,
    method: Method,
) -> Hyperparameters:
    section = "hyperparameters"
    defaults = Hyperparameters()
    data = _check_keys(data, section, [f.name for f in dataclasses.fields(Hyperparameters)])

    gamma = _real_field(data, "gamma", section, None, 0.0, 1.0)
    if method == Method.rlkd_r3 and gamma is None:
        raise ConfigurationError(f"{section}.gamma", "is required by method rlkd-r3")

    baseline = _real_field(data, "baseline_decay", section, None, 0.0, 0.999999)
    return Hyperparameters(
        alpha=typing.cast(float, _real_field(data, "alpha", section, defaults.alpha, 0.0, 1.0)),
        temperature=typing.cast(
            float, _real_field(data, "temperature", section, defaults.temperature, 0.0, low_inclusive=False)
        ),
        scale_by_t_squared=_bool_field(data, "scale_by_t_squared", section, defaults.scale_by_t_squared),
        epochs=_int_field(data, "epochs", section, defaults.epochs, minimum=1),
        batch_size=_int_field(data, "batch_size", section, defaults.batch_size, minimum=1),
        optimizer=_enum_field(data, "optimizer", section, OptimizerKind, defaults.optimizer),
        learning_rate=_real_field(data, "learning_rate", section, None, 0.0, low_inclusive=False),
        policy_learning_rate=typing.cast(
            float, _real_field(data, "policy_learning_rate", section, defaults.policy_learning_rate, 0.0)
        ),
        gamma=gamma,
        student_pretrain_epochs=_int_field(data, "student_pretrain_epochs", section, defaults.student_pretrain_epochs),
        selector_pretrain_epochs=_int_field(
            data, "selector_pretrain_epochs", section, defaults.selector_pretrain_epochs
        ),
        selector_pretrain_reward=_enum_field(
            data, "selector_pretrain_reward", section, SelectorPretrainReward, defaults.selector_pretrain_reward
        ),
        schedule=_enum_field(data, "schedule", section, Schedule, defaults.schedule),
        gradient_mode=_enum_field(data, "gradient_mode", section, GradientMode, defaults.gradient_mode),
        dev_subsample_size=_int_field(data, "dev_subsample_size", section, defaults.dev_subsample_size, minimum=1),
        baseline_decay=baseline,
        lr_iterations=_int_field(data, "lr_iterations", section, defaults.lr_iterations, minimum=1),
        lr_learning_rate=typing.cast(
            float, _real_field(data, "lr_learning_rate", section, defaults.lr_learning_rate, 0.0, low_inclusive=False)
        ),
    )


def parse_experiment_config(
    data: typing.Any,
    base_dir: str = ".",
    environ: typing.Optional[typing.Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Validate a decoded experiment config.

    The ``benchmark`` section takes ``kind`` (``synthetic`` or ``files``);
    synthetic benchmarks take ``seed``, ``n_per_split``, ``num_classes``,
    ``num_regions``, ``label_noise`` and ``feature_dim`` while file
    benchmarks take the ``train``, ``dev``, ``test`` and ``teacher_logits``
    paths. The ``teachers`` section takes ``num_teachers``,
    ``corrupt_regions``, ``hidden_layers``, ``epochs``, ``batch_size``,
    ``optimizer``, ``learning_rate``, ``seed`` and ``workers``. ``student`` is
    ``small``, ``large`` or a list of hidden widths. The
    ``hyperparameters`` section takes the fields of :class:`Hyperparameters`.

    Args:
        data: The decoded JSON object.
        base_dir: Directory relative paths are resolved against.
        environ: Environment used for the ``SEED`` fallback when ``seeds``
            is omitted, defaults to ``os.environ``.

    Returns:
        ExperimentConfig: The validated config.

    Raises:
        ConfigurationError: A field is unknown, missing or out of range.
    """
    data = _check_keys(
        data,
        "",
        ["name", "method", "teacher", "weights", "seeds", "benchmark", "teachers", "student", "hyperparameters"],
    )
    try:
        method = Method(data.get("method"))
    except ValueError:
        raise ConfigurationError("method", f"is not a known method: {data.get('method')!r}") from None

    if "seeds" in data:
        seeds = data["seeds"]
        if not isinstance(seeds, list) or not seeds or not all(_is_int(s) and 0 <= s < 2**64 for s in seeds):
            raise ConfigurationError("seeds", f"must be a non-empty list of 64-bit unsigned integers, got {seeds!r}")
        if len(set(seeds)) != len(seeds):
            raise ConfigurationError("seeds", "must not repeat a seed")
    else:
        env_seed = (os.environ if environ is None else environ).get("SEED")
        try:
            seeds = [int(env_seed)] if env_seed is not None else [0]
        except ValueError:
            raise ConfigurationError("seeds", f"SEED environment value {env_seed!r} is not an integer") from None

    benchmark = _parse_benchmark(data.get("benchmark", {}))
    teachers = _parse_teachers(data.get("teachers", {}), benchmark)
    hyperparameters = _parse_hyperparameters(data.get("hyperparameters", {}), method)

    teacher = None
    if method == Method.vkd_single:
        teacher = data.get("teacher", 1)
        if not _is_int(teacher) or not 1 <= teacher <= teachers.num_teachers:
            raise ConfigurationError("teacher", f"must be in [1, {teachers.num_teachers}], got {teacher!r}")
    elif "teacher" in data:
        raise ConfigurationError("teacher", "is only used by method vkd-single")

    weights = None
    if "weights" in data:
        raw = data["weights"]
        if method != Method.vkd_weighted:
            raise ConfigurationError("weights", "is only used by method vkd-weighted")
        valid = isinstance(raw, list) and len(raw) == teachers.num_teachers and all(_is_real(w) for w in raw)
        if not valid or min(raw) < 0 or abs(sum(raw) - 1.0) > 1e-9:
            raise ConfigurationError("weights", f"must be {teachers.num_teachers} nonnegative reals summing to 1")
        weights = tuple(float(w) for w in raw)

    student = data.get("student", "small")
    if isinstance(student, str):
        if student not in STUDENT_ARCHITECTURES:
            raise ConfigurationError("student", f"must be small, large or a list of widths, got {student!r}")
        widths = STUDENT_ARCHITECTURES[student]
    else:
        widths = _widths(student, "student")

    name = data.get("name", method.value if teacher is None else f"{method.value}-{teacher}")
    if not isinstance(name, str) or not name:
        raise ConfigurationError("name", "must be a non-empty string")

    return ExperimentConfig(
        method=method,
        seeds=tuple(seeds),
        name=name,
        teacher=teacher,
        weights=weights,
        student=widths,
        benchmark=benchmark,
        teachers=teachers,
        hyperparameters=hyperparameters,
        base_dir=base_dir,
    )


def load_experiment_config(
    path: PathType,
    environ: typing.Optional[typing.Mapping[str, str]] = None,
) -> ExperimentConfig:
    """Read and validate an experiment config file."""
    try:
        with open(path, mode="r", encoding="utf-8") as fd:
            data = json.load(fd)
    except OSError as e:
        raise ConfigurationError("config", f"cannot be read from '{path}': {e.strerror or e}") from e
    except ValueError as e:
        raise ConfigurationError("config", f"is not valid JSON: {e}") from e

    return parse_experiment_config(data, os.path.dirname(os.path.abspath(path)), environ)


class PreparedBenchmark(typing.NamedTuple):
    """The splits and the teacher predictions shared by all seeds."""

    train: Dataset
    dev: Dataset
    test: Dataset
    teacher_preds: TeacherPredictions  #: Covers every split at the distillation temperature.
    fingerprint: str  #: Identifies the data and the teachers.


def _resolve(
    config: ExperimentConfig,
    path: typing.Optional[str],
) -> str:
    return os.path.join(config.base_dir, typing.cast(str, path))


def _file_digest(
    path: str,
) -> str:
    digest = hashlib.sha256()
    with open(path, mode="rb") as fd:
        for chunk in iter(lambda: fd.read(65536), b""):
            digest.update(chunk)

    return digest.hexdigest()


def generate_benchmark(
    benchmark: BenchmarkSpec,
) -> typing.Tuple[Dataset, Dataset, Dataset]:
    """Generate the splits of a synthetic benchmark."""
    return generate_quadrant_benchmark(
        seed=benchmark.seed,
        n_per_split=benchmark.n_per_split,
        num_classes=benchmark.num_classes,
        num_regions=benchmark.num_regions,
        label_noise=benchmark.label_noise,
        feature_dim=benchmark.feature_dim,
    )


def train_teacher_pool(
    teachers: TeacherPoolSpec,
    train: Dataset,
) -> typing.List[MlpClassifier]:
    """Train the teacher pool described by the config on the train split."""
    return make_teacher_pool(
        train,
        teachers.num_teachers,
        corruptions=[TeacherCorruptionSpec(r) if r is not None else None for r in teachers.corrupt_regions],
        hidden_layers=teachers.hidden_layers,
        seed=teachers.seed,
        epochs=teachers.epochs,
        batch_size=teachers.batch_size,
        optimizer=OptimizerSpec(teachers.optimizer, teachers.learning_rate),
        max_workers=teachers.workers,
    )


def prepare_benchmark(
    config: ExperimentConfig,
) -> PreparedBenchmark:
    """Build or load the splits and the teacher predictions of an experiment."""
    benchmark = config.benchmark
    temperature = config.hyperparameters.temperature
    if benchmark.kind == "files":
        paths = [_resolve(config, p) for p in [benchmark.train, benchmark.dev, benchmark.test]]
        logits_path = _resolve(config, benchmark.teacher_logits)
        for field, path in zip(["train", "dev", "test", "teacher_logits"], paths + [logits_path]):
            if not os.path.isfile(path):
                raise ConfigurationError(f"benchmark.{field}", f"file '{path}' does not exist")

        train, dev, test = [load_jsonl(p) for p in paths]
        teacher_preds = TeacherPredictions.concatenate(
            [load_teacher_logits(logits_path, s, config.teachers.num_teachers, temperature) for s in [train, dev, test]]
        )
        fingerprint = _hash_json(
            {"files": [_file_digest(p) for p in paths + [logits_path]], "num_teachers": config.teachers.num_teachers}
        )

    else:
        train, dev, test = generate_benchmark(benchmark)
        pool = train_teacher_pool(config.teachers, train)
        teacher_preds = TeacherPredictions.concatenate(
            [compute_teacher_predictions(pool, s, temperature) for s in [train, dev, test]]
        )
        fingerprint = _hash_json(
            _jsonable({"benchmark": dataclasses.asdict(benchmark), "teachers": dataclasses.asdict(config.teachers)})
        )

    log.info("Prepared benchmark %s with %d teachers", fingerprint[:12], teacher_preds.num_teachers)
    return PreparedBenchmark(train, dev, test, teacher_preds, fingerprint)


def resolve_strategy(
    config: ExperimentConfig,
    bench: PreparedBenchmark,
) -> typing.Optional[EnsembleStrategy]:
    """The fixed teacher ensemble of a method, ``None`` for ft and RL-KD."""
    method = config.method
    hp = config.hyperparameters
    if method == Method.vkd_single:
        return EnsembleStrategy.single(typing.cast(int, config.teacher))

    if method == Method.vkd_uniform:
        return EnsembleStrategy.uniform()

    if method == Method.vkd_weighted:
        weights = config.weights or tuple(dev_accuracy_weights(bench.teacher_preds, bench.dev))
        return EnsembleStrategy.weighted(weights)

    if method == Method.vkd_rand_single:
        return EnsembleStrategy.rand_single()

    if method in [Method.vkd_lr_train, Method.vkd_lr_dev]:
        fit_split = bench.train if method == Method.vkd_lr_train else bench.dev
        weights = fit_lr_ensemble(bench.teacher_preds, fit_split, hp.lr_iterations, hp.lr_learning_rate)
        return EnsembleStrategy.lr_learned(weights)

    if method == Method.vkd_best_single:
        return EnsembleStrategy.best_single()

    return None


def teacher_accuracies(
    config: ExperimentConfig,
    bench: PreparedBenchmark,
) -> typing.Dict[str, float]:
    """Test accuracy of every single teacher and of the fixed ensembles."""
    hp = config.hyperparameters
    preds = bench.teacher_preds
    strategies = [EnsembleStrategy.single(k) for k in range(1, preds.num_teachers + 1)]
    strategies += [
        EnsembleStrategy.uniform(),
        EnsembleStrategy.weighted(config.weights or tuple(dev_accuracy_weights(preds, bench.dev))),
        EnsembleStrategy.best_single(),
    ]
    result = {str(s): evaluate_ensemble_accuracy(s, preds, bench.test) for s in strategies}
    for label, split in [("lr-train", bench.train), ("lr-dev", bench.dev)]:
        weights = fit_lr_ensemble(preds, split, hp.lr_iterations, hp.lr_learning_rate)
        result[label] = evaluate_ensemble_accuracy(EnsembleStrategy.lr_learned(weights), preds, bench.test)

    return result


class SeedResult(typing.NamedTuple):
    """Outcome of one seeded run."""

    seed: int
    dev_accuracy: float
    test_accuracy: float
    trace: str  #: Trace path relative to the output directory.


def kd_config(
    hyperparameters: Hyperparameters,
    seed: int,
) -> KdConfig:
    return KdConfig(
        alpha=hyperparameters.alpha,
        temperature=hyperparameters.temperature,
        scale_by_t_squared=hyperparameters.scale_by_t_squared,
        epochs=hyperparameters.epochs,
        batch_size=hyperparameters.batch_size,
        optimizer=OptimizerSpec(hyperparameters.optimizer, hyperparameters.learning_rate),
        seed=seed,
    )


def rlkd_config(
    config: ExperimentConfig,
    seed: int,
) -> RlkdConfig:
    hp = config.hyperparameters
    reward = RewardConfig(
        variant=typing.cast(RewardVariant, config.method.reward_variant),
        gamma=hp.gamma,
        dev_subsample_size=hp.dev_subsample_size,
        dev_seed=seed,
        baseline_decay=hp.baseline_decay,
    )
    return RlkdConfig(
        kd=kd_config(hp, seed),
        reward=reward,
        policy_learning_rate=hp.policy_learning_rate,
        epochs=hp.epochs,
        schedule=hp.schedule,
        student_pretrain_epochs=hp.student_pretrain_epochs,
        selector_pretrain_epochs=hp.selector_pretrain_epochs,
        selector_pretrain_reward=hp.selector_pretrain_reward,
        gradient_mode=hp.gradient_mode,
        seed=seed,
    )


def run_seed(
    config: ExperimentConfig,
    bench: PreparedBenchmark,
    strategy: typing.Optional[EnsembleStrategy],
    seed: int,
    out_dir: PathType,
) -> SeedResult:
    """Train and evaluate one student and write its checkpoints and trace."""
    run_dir = os.path.join(out_dir, "runs", f"seed-{seed}")
    os.makedirs(run_dir, exist_ok=True)
    student = build_classifier(
        bench.train.feature_dim, bench.train.num_classes, config.student, SeededRng(seed, "student-init")
    )

    if config.method.reward_variant is not None:
        result = run_rlkd(
            bench.train, bench.dev, bench.test, bench.teacher_preds, student, rlkd_config(config, seed), run_dir
        )
        trace = result.trace
    else:
        teacher_preds = bench.teacher_preds if strategy else None
        model, kd_trace = vanilla_kd_train(
            student, teacher_preds, strategy, kd_config(config.hyperparameters, seed), bench.train, bench.dev
        )
        trace = RunTrace.from_kd_trace(kd_trace, bench.teacher_preds.num_teachers if strategy else 0)
        trace.test_accuracy = evaluate_accuracy(model, bench.test)
        save_model(model, os.path.join(run_dir, "student.json"))
        trace.save(os.path.join(run_dir, "trace.json"))

    log.info("Seed %d of %s: test accuracy %.4f", seed, config.label, trace.test_accuracy)
    return SeedResult(
        seed,
        typing.cast(float, trace.best_dev_accuracy),
        typing.cast(float, trace.test_accuracy),
        f"runs/seed-{seed}/trace.json",
    )


def _summary_dict(
    values: typing.Sequence[float],
) -> typing.Dict[str, typing.Any]:
    summary = summarize(values)
    return {"mean": summary.mean, "stdev": summary.stdev, "count": summary.count}


def run_experiment(
    config: ExperimentConfig,
    out_dir: PathType,
    workers: int = 1,
) -> typing.Dict[str, typing.Any]:
    """Run every seed of an experiment and write ``report.json``.

    Seeds run concurrently in a thread pool when ``workers`` is above 1, each
    run stays sequential and the report does not depend on the worker count.

    Args:
        config: The experiment.
        out_dir: The output directory.
        workers: The number of seeds run at once.

    Returns:
        Dict[str, Any]: The report.

    Raises:
        ExperimentRunError: A seeded run failed, chained to the cause.
    """
    if workers < 1:
        raise InvalidArgumentError("workers", f"must be at least 1, got {workers}")

    started = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    bench = prepare_benchmark(config)
    strategy = resolve_strategy(config, bench)

    def run_one(seed: int) -> SeedResult:
        try:
            return run_seed(config, bench, strategy, seed, out_dir)
        except Exception as e:
            raise ExperimentRunError(config.label, seed) from e

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run_one, config.seeds))
    else:
        results = [run_one(s) for s in config.seeds]

    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "name": config.name,
        "method": config.label,
        "config_hash": config.config_hash,
        "benchmark_hash": bench.fingerprint,
        "seeds": list(config.seeds),
        "runs": [r._asdict() for r in results],
        "summary": {
            "dev_accuracy": _summary_dict([r.dev_accuracy for r in results]),
            "test_accuracy": _summary_dict([r.test_accuracy for r in results]),
        },
        "pairwise": [],
        "teacher_accuracies": teacher_accuracies(config, bench),
        "wall_clock_seconds": time.perf_counter() - started,
    }
    validate_report(report)
    with open(os.path.join(out_dir, "report.json"), mode="w", encoding="utf-8") as fd:
        json.dump(report, fd, indent=2, sort_keys=True)
        fd.write("\n")

    return report


def _require(
    condition: bool,
    reason: str,
) -> None:
    if not condition:
        raise InvalidArgumentError("report", reason)


def _is_accuracy(value: typing.Any) -> bool:
    return _is_real(value) and 0.0 <= value <= 1.0


def validate_report(
    report: typing.Any,
) -> None:
    """Check a decoded report against the documented schema.

    Raises:
        InvalidArgumentError: The report does not follow the schema.
    """
    _require(isinstance(report, dict), "must be a JSON object")
    expected = {
        "schema_version",
        "name",
        "method",
        "config_hash",
        "benchmark_hash",
        "seeds",
        "runs",
        "summary",
        "pairwise",
        "teacher_accuracies",
        "wall_clock_seconds",
    }
    _require(set(report) == expected, f"keys must be {sorted(expected)}, got {sorted(report)}")
    _require(report["schema_version"] == REPORT_SCHEMA_VERSION, f"unsupported schema {report['schema_version']!r}")
    for key in ["name", "method", "config_hash", "benchmark_hash"]:
        _require(isinstance(report[key], str) and bool(report[key]), f"{key} must be a non-empty string")

    seeds = report["seeds"]
    _require(isinstance(seeds, list) and bool(seeds) and all(_is_int(s) for s in seeds), "seeds must be integers")
    _require(len(set(seeds)) == len(seeds), "seeds must be unique")

    runs = report["runs"]
    _require(isinstance(runs, list) and len(runs) == len(seeds), "runs must hold one entry per seed")
    for run in runs:
        _require(isinstance(run, dict) and set(run) == {"seed", "dev_accuracy", "test_accuracy", "trace"}, "bad run")
        _require(_is_accuracy(run["dev_accuracy"]) and _is_accuracy(run["test_accuracy"]), "accuracy out of [0, 1]")
        _require(isinstance(run["trace"], str), "run trace must be a path")

    _require([r["seed"] for r in runs] == seeds, "runs must follow the seed order")

    summary = report["summary"]
    _require(isinstance(summary, dict) and set(summary) == {"dev_accuracy", "test_accuracy"}, "bad summary")
    for entry in summary.values():
        _require(isinstance(entry, dict) and set(entry) == {"mean", "stdev", "count"}, "bad summary entry")
        _require(_is_accuracy(entry["mean"]) and _is_real(entry["stdev"]) and entry["stdev"] >= 0, "bad statistic")

    _require(isinstance(report["pairwise"], list), "pairwise must be a list")
    accuracies = report["teacher_accuracies"]
    _require(isinstance(accuracies, dict) and all(_is_accuracy(v) for v in accuracies.values()), "bad teacher rows")
    _require(_is_real(report["wall_clock_seconds"]) and report["wall_clock_seconds"] >= 0, "bad wall clock")


def load_report(
    path: PathType,
) -> typing.Dict[str, typing.Any]:
    """Read and validate a report file."""
    try:
        with open(path, mode="r", encoding="utf-8") as fd:
            report = json.load(fd)
    except OSError as e:
        raise InvalidArgumentError("reports", f"cannot read '{path}': {e.strerror or e}") from e
    except ValueError as e:
        raise InvalidArgumentError("reports", f"'{path}' is not valid JSON: {e}") from e

    validate_report(report)
    return typing.cast(typing.Dict[str, typing.Any], report)


def _format_table(
    rows: typing.List[typing.List[str]],
) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def _seed_accuracies(
    report: typing.Dict[str, typing.Any],
    seeds: typing.Sequence[int],
) -> typing.List[float]:
    by_seed = {r["seed"]: r["test_accuracy"] for r in report["runs"]}
    return [by_seed[s] for s in seeds]


def compare(
    report_paths: typing.Sequence[PathType],
    out_dir: PathType,
) -> typing.Dict[str, typing.Any]:
    """Compare the reports of experiments run on the same benchmark.

    Writes ``comparison.json`` and the aligned ``comparison.txt`` with the
    mean and standard deviation of every method, in percent in the text
    table, and the two-sided Welch p-value of every method pair. The test
    uses the runs of the seeds both reports share; pairs sharing fewer than
    two seeds get no p-value.

    Args:
        report_paths: At least two report files.
        out_dir: The output directory.

    Returns:
        Dict[str, Any]: The comparison written to ``comparison.json``.

    Raises:
        IncompatibleReportsError: The reports were run on different
            benchmarks.
    """
    if len(report_paths) < 2:
        raise InvalidArgumentError("reports", f"need at least 2 reports, got {len(report_paths)}")

    reports = [load_report(p) for p in report_paths]
    first = reports[0]
    for path, report in zip(report_paths[1:], reports[1:]):
        if report["benchmark_hash"] != first["benchmark_hash"]:
            raise IncompatibleReportsError(str(report_paths[0]), str(path), "benchmark hashes differ")

    names: typing.List[str] = []
    for report in reports:
        name = report["name"]
        names.append(name if name not in names else f"{name}#{len(names) + 1}")

    methods = []
    for name, report in zip(names, reports):
        test = summarize([r["test_accuracy"] for r in report["runs"]])
        dev = summarize([r["dev_accuracy"] for r in report["runs"]])
        methods.append(
            {
                "name": name,
                "method": report["method"],
                "seeds": report["seeds"],
                "test_accuracy": {"mean": test.mean, "stdev": test.stdev, "count": test.count},
                "dev_accuracy": {"mean": dev.mean, "stdev": dev.stdev, "count": dev.count},
            }
        )

    pairwise = []
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            common = sorted(set(reports[i]["seeds"]) & set(reports[j]["seeds"]))
            p_value = None
            significant = False
            if len(common) >= 2:
                result = welch_ttest(_seed_accuracies(reports[i], common), _seed_accuracies(reports[j], common))
                p_value = result.p_value
                significant = result.significant
            else:
                log.warning(
                    "Skipping t-test of %s and %s, they share %d seeds and need 2", names[i], names[j], len(common)
                )

            pairwise.append(
                {
                    "first": names[i],
                    "second": names[j],
                    "common_seeds": len(common),
                    "p_value": p_value,
                    "significant": significant,
                }
            )

    comparison = {"benchmark_hash": first["benchmark_hash"], "methods": methods, "pairwise": pairwise}

    table = [["method", "n", "test mean", "test stdev", "dev mean", "dev stdev"]]
    for m in methods:
        table.append(
            [
                m["name"],
                str(m["test_accuracy"]["count"]),
                f"{100 * m['test_accuracy']['mean']:.2f}",
                f"{100 * m['test_accuracy']['stdev']:.3f}",
                f"{100 * m['dev_accuracy']['mean']:.2f}",
                f"{100 * m['dev_accuracy']['stdev']:.3f}",
            ]
        )

    pairs = [["first", "second", "p-value", "significant"]]
    for p in pairwise:
        p_text = "n/a" if p["p_value"] is None else f"{p['p_value']:.4g}"
        pairs.append([p["first"], p["second"], p_text, "yes" if p["significant"] else "no"])

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "comparison.json"), mode="w", encoding="utf-8") as fd:
        json.dump(comparison, fd, indent=2, sort_keys=True)
        fd.write("\n")

    with open(os.path.join(out_dir, "comparison.txt"), mode="w", encoding="utf-8") as fd:
        fd.write(_format_table(table))
        fd.write("\n")
        fd.write(_format_table(pairs))

    return comparison


def _series_prefix(
    path: str,
    used: typing.Set[str],
) -> str:
    parent = os.path.basename(os.path.dirname(os.path.abspath(path)))
    stem = os.path.splitext(os.path.basename(path))[0]
    prefix = f"{parent}-{stem}" if parent else stem
    candidate = prefix
    idx = 2
    while candidate in used:
        candidate = f"{prefix}-{idx}"
        idx += 1

    used.add(candidate)
    return candidate


def _write_csv(
    path: str,
    header: typing.List[str],
    rows: typing.Iterable[typing.List[typing.Any]],
) -> str:
    with open(path, mode="w", encoding="utf-8", newline="") as fd:
        writer = csv.writer(fd)
        writer.writerow(header)
        writer.writerows(rows)

    return path


def emit_plot_data(
    trace_paths: typing.Sequence[PathType],
    out_dir: PathType,
) -> typing.List[str]:
    """Write the series of run traces as CSV files.

    For every trace ``<prefix>-losses.csv`` has the columns ``epoch``,
    ``train_loss`` and ``dev_accuracy`` with one row per epoch. Traces of
    selector runs also get ``<prefix>-rewards.csv`` with ``batch`` and
    ``reward`` and ``<prefix>-selection.csv`` with ``epoch``, then
    ``teacher_k`` for the overall rate and ``region_r_teacher_k`` for the
    rate on region r. The prefix is the trace's directory and file name.

    Returns:
        List[str]: The written files.

    Raises:
        TraceFileError: A trace is missing or unreadable.
    """
    traces = [(str(p), RunTrace.load(p)) for p in trace_paths]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    used: typing.Set[str] = set()
    for path, trace in traces:
        prefix = os.path.join(out_dir, _series_prefix(path, used))
        written.append(
            _write_csv(
                f"{prefix}-losses.csv",
                ["epoch", "train_loss", "dev_accuracy"],
                ([e.epoch, e.train_loss, e.dev_accuracy] for e in trace.epochs),
            )
        )

        if trace.batch_rewards:
            written.append(
                _write_csv(
                    f"{prefix}-rewards.csv",
                    ["batch", "reward"],
                    ([idx, r] for idx, r in enumerate(trace.batch_rewards, start=1)),
                )
            )

        if trace.epochs and trace.epochs[0].selection_rates:
            teachers = range(1, trace.num_teachers + 1)
            regions = sorted(trace.epochs[0].region_selection_rates)
            header = ["epoch"] + [f"teacher_{k}" for k in teachers]
            header += [f"region_{r}_teacher_{k}" for r in regions for k in teachers]
            rows = (
                [e.epoch] + list(e.selection_rates) + [v for r in regions for v in e.region_selection_rates[r]]
                for e in trace.epochs
            )
            written.append(_write_csv(f"{prefix}-selection.csv", header, rows))

    log.info("Wrote %d plot series to %s", len(written), out_dir)
    return written


def generate_data(
    spec: typing.Any,
    out_dir: PathType,
) -> typing.List[str]:
    """Write a synthetic benchmark and optionally its teacher probabilities.

    ``spec`` holds the synthetic benchmark fields plus an optional
    ``teachers`` section as in an experiment config. The splits are written
    to ``train.jsonl``, ``dev.jsonl`` and ``test.jsonl``; with teachers their
    temperature 1 rows for every split go to ``teachers.jsonl``.

    Returns:
        List[str]: The written files.
    """
    if not isinstance(spec, dict):
        raise ConfigurationError("spec", "must be a JSON object")

    spec = dict(spec)
    teachers_data = spec.pop("teachers", None)
    benchmark = _parse_benchmark(spec)
    if benchmark.kind != "synthetic":
        raise ConfigurationError("benchmark.kind", "gen-data only generates synthetic benchmarks")

    os.makedirs(out_dir, exist_ok=True)
    splits = generate_benchmark(benchmark)
    written = []
    for name, split in zip(["train", "dev", "test"], splits):
        path = os.path.join(out_dir, f"{name}.jsonl")
        save_jsonl(split, path)
        written.append(path)

    if teachers_data is not None:
        pool = train_teacher_pool(_parse_teachers(teachers_data, benchmark), splits[0])
        preds = TeacherPredictions.concatenate([compute_teacher_predictions(pool, s, 1.0) for s in splits])
        path = os.path.join(out_dir, "teachers.jsonl")
        save_teacher_logits(preds, path)
        written.append(path)

    log.info("Generated benchmark files in %s", out_dir)
    return written


__all__ = [
    "BenchmarkSpec",
    "DESK_LEARNING_RATES",
    "ExperimentConfig",
    "Hyperparameters",
    "Method",
    "PreparedBenchmark",
    "SeedResult",
    "TRANSFORMER_GRID",
    "TeacherPoolSpec",
    "compare",
    "emit_plot_data",
    "generate_data",
    "load_experiment_config",
    "load_report",
    "parse_experiment_config",
    "prepare_benchmark",
    "run_experiment",
    "validate_report",
]
