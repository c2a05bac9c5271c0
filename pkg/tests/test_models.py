# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import math

import numpy as np
import pytest

from rlkd import _models as models
from rlkd._datasets import Batch, Dataset, generate_quadrant_benchmark
from rlkd._exceptions import InvalidArgumentError, NumericDivergenceError
from rlkd._numerics import SeededRng, check_gradient


def _random_batch(rng, n, d, num_classes):
    return Batch(
        ids=np.arange(n),
        features=rng.normal(0.0, 1.0, (n, d)),
        labels=rng.integers(1, num_classes + 1, n),
        regions=None,
    )


def test_mlp_defaults_to_zero():
    model = models.MlpClassifier([3, 4, 2])
    assert model.input_dim == 3
    assert model.num_classes == 2
    assert model.num_parameters == 3 * 4 + 4 + 4 * 2 + 2
    assert np.all(model.flat_parameters() == 0)
    assert repr(model) == "<MlpClassifier layer_sizes=[3, 4, 2]>"


@pytest.mark.parametrize(
    "sizes, weights, match",
    [
        ([3], None, "need at least input and output sizes"),
        ([3, 0, 2], None, "need at least input and output sizes"),
        ([3, 2], [np.zeros((2, 3))], "do not match layer sizes"),
        ([3, 2], [np.full((3, 2), np.inf)], "must be finite"),
    ],
    ids=["one-layer", "zero-width", "shape", "non-finite"],
)
def test_mlp_invalid(sizes, weights, match):
    with pytest.raises(InvalidArgumentError, match=match):
        models.MlpClassifier(sizes, weights)


def test_mlp_initialize_glorot_bounds():
    model = models.MlpClassifier.initialize([10, 20, 3], SeededRng(0))
    limit = math.sqrt(6.0 / 30)
    assert np.abs(model.weights[0]).max() <= limit
    assert np.abs(model.weights[0]).max() > limit / 2
    assert np.all(model.biases[0] == 0)


def test_mlp_initialize_reproducible():
    a = models.MlpClassifier.initialize([4, 8, 2], SeededRng(5, "init"))
    b = models.MlpClassifier.initialize([4, 8, 2], SeededRng(5, "init"))
    assert np.array_equal(a.flat_parameters(), b.flat_parameters())


def test_mlp_forward_known_values():
    model = models.MlpClassifier(
        [2, 2, 2],
        weights=[np.array([[1.0, -1.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 2.0]])],
        biases=[np.array([0.0, 0.5]), np.array([0.1, 0.0])],
    )
    logits = models.forward_logits(model, np.array([1.0, 2.0]))
    # hidden = relu([1, 1.5]) -> logits [1.1, 3.0]
    assert np.allclose(logits, [1.1, 3.0])
    assert np.allclose(models.hidden_representation(model, np.array([1.0, 2.0])), [[1.0, 1.5]])

    negative = models.forward_logits(model, np.array([[-1.0, 0.0]]))
    assert np.allclose(negative, [[0.1, 2.0]])


def test_mlp_copy_is_independent():
    model = models.MlpClassifier.initialize([2, 3, 2], SeededRng(1))
    clone = model.copy()
    clone.weights[0][0, 0] += 1.0
    assert model.weights[0][0, 0] != clone.weights[0][0, 0]


def test_flat_parameters_round_trip():
    model = models.MlpClassifier.initialize([3, 5, 4, 2], SeededRng(2))
    rebuilt = model.with_flat_parameters(model.flat_parameters())
    assert np.array_equal(rebuilt.flat_parameters(), model.flat_parameters())


def test_forward_wrong_dimension():
    model = models.MlpClassifier([3, 2])
    with pytest.raises(InvalidArgumentError, match="expected length 3, got 2"):
        models.forward_logits(model, np.zeros(2))


def test_predict_proba_temperature():
    model = models.MlpClassifier([1, 2], weights=[np.array([[2.0, 0.0]])])
    sharp = models.predict_proba(model, np.array([1.0]))
    soft = models.predict_proba(model, np.array([1.0]), temperature=4.0)
    assert sharp[0] > soft[0] > 0.5
    assert soft.sum() == pytest.approx(1.0)


def test_accuracy_score_ties_go_to_lowest_class():
    scores = np.array([[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]])
    assert models.accuracy_score(scores, np.array([1, 2, 2])) == pytest.approx(2 / 3)


def test_evaluate_accuracy_checks_dataset():
    model = models.MlpClassifier([3, 2])
    data = Dataset([0], [[1.0, 2.0]], [1], 2)
    with pytest.raises(InvalidArgumentError, match="expects d=3, C=2"):
        models.evaluate_accuracy(model, data)


@pytest.mark.parametrize("hidden", [(), (5,), (6, 4)], ids=["linear", "one-hidden", "two-hidden"])
def test_hard_label_loss_gradient(hidden):
    rng = np.random.default_rng(len(hidden))
    for trial in range(5):
        model = models.MlpClassifier.initialize([4, *hidden, 3], SeededRng(trial, "grad"))
        batch = _random_batch(rng, 7, 4, 3)

        def loss(values):
            return models.hard_label_loss(model.with_flat_parameters(values), batch, with_gradients=False)[0]

        def gradient(values):
            _, grads = models.hard_label_loss(model.with_flat_parameters(values), batch)
            return models.flatten_gradients(grads)

        assert check_gradient(loss, gradient, model.flat_parameters()) < 1e-4


def test_hard_label_loss_without_gradients():
    model = models.MlpClassifier([2, 2])
    batch = Batch(np.arange(2), np.ones((2, 2)), np.array([1, 2]), None)
    loss, grads = models.hard_label_loss(model, batch, with_gradients=False)
    assert loss == pytest.approx(math.log(2))
    assert grads is None


def test_optimizer_spec_defaults():
    assert models.OptimizerSpec().effective_learning_rate == 1e-3
    assert models.OptimizerSpec(models.OptimizerKind.sgd).effective_learning_rate == 1e-2
    assert models.OptimizerSpec(models.OptimizerKind.sgd, 0.5).effective_learning_rate == 0.5


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"learning_rate": 0.0}, "learning_rate"),
        ({"beta1": 1.0}, "moment decays"),
        ({"epsilon": 0.0}, "moment decays"),
    ],
    ids=["learning-rate", "beta1", "epsilon"],
)
def test_optimizer_spec_invalid(kwargs, match):
    with pytest.raises(InvalidArgumentError, match=match):
        models.OptimizerSpec(**kwargs)


def test_sgd_step():
    model = models.MlpClassifier([1, 1], weights=[np.array([[1.0]])], biases=[np.array([2.0])])
    state = models.OptimizerSpec(models.OptimizerKind.sgd, 0.1).create(model)
    state.step(model, [(np.array([[1.0]]), np.array([-2.0]))])
    assert model.weights[0][0, 0] == pytest.approx(0.9)
    assert model.biases[0][0] == pytest.approx(2.2)
    assert state.first_moment == []


def test_adam_first_step_moves_by_learning_rate():
    model = models.MlpClassifier([1, 1], weights=[np.array([[1.0]])], biases=[np.array([0.0])])
    state = models.OptimizerSpec(models.OptimizerKind.adam, 0.01).create(model)
    state.step(model, [(np.array([[5.0]]), np.array([-0.2]))])
    assert state.step_count == 1
    assert model.weights[0][0, 0] == pytest.approx(0.99, abs=1e-6)
    assert model.biases[0][0] == pytest.approx(0.01, abs=1e-6)


def test_train_classifier_learns_separable_data():
    rng = np.random.default_rng(0)
    features = np.concatenate([rng.normal(-2.0, 0.5, (50, 2)), rng.normal(2.0, 0.5, (50, 2))])
    data = Dataset(np.arange(100), features, [1] * 50 + [2] * 50, 2)
    model = models.build_classifier(2, 2, (), SeededRng(0, "init"))
    optimizer = models.OptimizerSpec(models.OptimizerKind.adam, 0.05).create(model)
    _, losses = models.train_classifier(model, data, optimizer, 20, 10, SeededRng(0, "train"))
    assert len(losses) == 20
    assert losses[-1] < losses[0]
    assert models.evaluate_accuracy(model, data) == 1.0


def test_train_classifier_reproducible():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(64, 16, 16))[0]
    results = []
    for _ in range(2):
        model = models.build_classifier(train.feature_dim, 2, (4,), SeededRng(1, "init"))
        models.train_classifier(model, train, models.OptimizerSpec().create(model), 2, 8, SeededRng(1, "train"))
        results.append(model.flat_parameters())

    assert np.array_equal(results[0], results[1])


def test_train_classifier_divergence():
    data = Dataset(np.arange(4), np.ones((4, 2)) * 1e3, [1, 2, 1, 2], 2)
    model = models.build_classifier(2, 2, (), SeededRng(0, "init"))
    optimizer = models.OptimizerSpec(models.OptimizerKind.sgd, 1e308).create(model)
    with pytest.raises(NumericDivergenceError, match="train_classifier"):
        with np.errstate(all="ignore"):
            models.train_classifier(model, data, optimizer, 3, 2, SeededRng(0))


def test_train_classifier_negative_epochs():
    data = Dataset(np.arange(2), np.ones((2, 2)), [1, 2], 2)
    model = models.MlpClassifier([2, 2])
    with pytest.raises(InvalidArgumentError, match="epochs"):
        models.train_classifier(model, data, models.OptimizerSpec().create(model), -1, 2, SeededRng(0))


def test_train_classifier_zero_epochs():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(64, 16, 16))[0]
    model = models.build_classifier(train.feature_dim, 2, (4,), SeededRng(2, "init"))
    before = model.flat_parameters()
    optimizer = models.OptimizerSpec().create(model)
    actual, losses = models.train_classifier(model, train, optimizer, 0, 8, SeededRng(2, "train"))
    assert losses == []
    assert np.array_equal(actual.flat_parameters(), before)


def test_evaluate_accuracy_ignores_order():
    test = generate_quadrant_benchmark(seed=1, n_per_split=(16, 16, 200))[2]
    model = models.build_classifier(test.feature_dim, 2, (6,), SeededRng(5, "init"))
    shuffled = test.subset(np.random.default_rng(0).permutation(len(test)))
    assert not np.array_equal(shuffled.ids, test.ids)
    assert models.evaluate_accuracy(model, shuffled) == models.evaluate_accuracy(model, test)


def test_corruption_relabels_only_its_region():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(400, 16, 16))[0]
    corrupt = models.TeacherCorruptionSpec(2).apply(train, SeededRng(0, "corrupt"))
    outside = train.regions != 2
    assert np.array_equal(corrupt.labels[outside], train.labels[outside])
    changed = float(np.mean(corrupt.labels[~outside] != train.labels[~outside]))
    assert 0.3 < changed < 0.7
    assert corrupt.name == "quadrant-train-corrupt-2"


def test_corrupted_teachers_fail_on_their_region():
    train, _, test = generate_quadrant_benchmark(seed=0, n_per_split=(4000, 16, 2000))
    pool = models.make_teacher_pool(
        train,
        4,
        corruptions=[models.TeacherCorruptionSpec(r) for r in range(1, 5)],
        seed=0,
        epochs=15,
        optimizer=models.OptimizerSpec(models.OptimizerKind.adam, 1e-2),
        max_workers=4,
    )
    for k, teacher in enumerate(pool, start=1):
        own = np.flatnonzero(test.regions == k)
        elsewhere = np.flatnonzero(test.regions != k)
        own_accuracy = models.evaluate_accuracy(teacher, test.subset(own))
        elsewhere_accuracy = models.evaluate_accuracy(teacher, test.subset(elsewhere))
        assert own_accuracy <= elsewhere_accuracy - 0.2


def test_corruption_unknown_region():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(16, 16, 16))[0]
    with pytest.raises(InvalidArgumentError, match="region 9 does not occur"):
        models.TeacherCorruptionSpec(9).apply(train, SeededRng(0))


def test_make_teacher_pool_deterministic_across_workers():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(64, 16, 16))[0]
    kwargs = {
        "corruptions": [models.TeacherCorruptionSpec(1), None],
        "hidden_layers": [(4,), (3, 3)],
        "seed": 9,
        "epochs": 2,
        "batch_size": 16,
    }
    serial = models.make_teacher_pool(train, 2, **kwargs)
    threaded = models.make_teacher_pool(train, 2, max_workers=2, **kwargs)
    assert [m.layer_sizes for m in serial] == [(8, 4, 2), (8, 3, 3, 2)]
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.flat_parameters(), b.flat_parameters())


def test_make_teacher_pool_default_layout():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(16, 16, 16))[0]
    pool = models.make_teacher_pool(train, 5, epochs=0)
    assert [m.layer_sizes[1] for m in pool] == [64, 48, 80, 56, 64]


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"num_teachers": 0}, "num_teachers"),
        ({"num_teachers": 2, "corruptions": [None]}, "corruptions"),
        ({"num_teachers": 2, "hidden_layers": [(4,)]}, "hidden_layers"),
    ],
    ids=["no-teachers", "corruptions", "hidden-layers"],
)
def test_make_teacher_pool_invalid(kwargs, match):
    train = generate_quadrant_benchmark(seed=0, n_per_split=(16, 16, 16))[0]
    with pytest.raises(InvalidArgumentError, match=match):
        models.make_teacher_pool(train, **kwargs)


def test_compute_teacher_predictions():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(16, 16, 16))[0]
    pool = [models.build_classifier(8, 2, (3,), SeededRng(k, "init")) for k in range(2)]
    preds = models.compute_teacher_predictions(pool, train, 5.0)
    assert preds.probabilities.shape == (16, 2, 2)
    assert np.allclose(preds.probabilities[:, 1], models.predict_proba(pool[1], train.features))
    assert np.allclose(preds.soft_probabilities[:, 0], models.predict_proba(pool[0], train.features, 5.0))
    assert preds.temperature == 5.0


def test_compute_teacher_predictions_empty_pool():
    train = generate_quadrant_benchmark(seed=0, n_per_split=(16, 16, 16))[0]
    with pytest.raises(InvalidArgumentError, match="pool"):
        models.compute_teacher_predictions([], train, 1.0)


def test_model_checkpoint_is_bit_exact(tmp_path):
    model = models.MlpClassifier.initialize([3, 7, 2], SeededRng(4))
    path = tmp_path / "model.json"
    models.save_model(model, path)
    loaded = models.load_model(path)
    assert loaded.layer_sizes == model.layer_sizes
    assert np.array_equal(loaded.flat_parameters(), model.flat_parameters())


def test_load_model_wrong_format(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something"}', encoding="utf-8")
    with pytest.raises(InvalidArgumentError, match="not an rlkd model checkpoint"):
        models.load_model(path)
