# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import math

import numpy as np
import pytest
from scipy.stats import entropy

from rlkd import _numerics as numerics
from rlkd._exceptions import InvalidArgumentError, NumericError


def test_softmax_sums_to_one():
    actual = numerics.softmax([1.0, 2.0, 3.0])
    assert actual.sum() == pytest.approx(1.0)
    assert np.all(np.diff(actual) > 0)


def test_softmax_large_logits():
    actual = numerics.softmax([1000.0, 1000.0])
    assert np.allclose(actual, [0.5, 0.5])


@pytest.mark.parametrize("temperature", [1.0, 5.0, 20.0], ids=["t1", "t5", "t20"])
def test_softmax_temperature_flattens(temperature):
    logits = np.array([2.0, 0.0, -1.0])
    expected = np.exp(logits / temperature) / np.exp(logits / temperature).sum()
    assert np.allclose(numerics.softmax(logits, temperature), expected)


@pytest.mark.parametrize(
    "logits, temperature, expected, tolerance",
    [
        ([0.0, 0.0], 1.0, [0.5, 0.5], 1e-12),
        ([math.log(2.0), 0.0], 1.0, [2 / 3, 1 / 3], 1e-12),
        ([5.0, 1.0], 1e6, [0.5, 0.5], 1e-5),
    ],
    ids=["symmetric", "ln2", "high-temperature"],
)
def test_softmax_known_values(logits, temperature, expected, tolerance):
    assert np.max(np.abs(numerics.softmax(logits, temperature) - expected)) < tolerance


@pytest.mark.parametrize("shift", [-250.0, -1.0, 3.5, 40.0], ids=["large-negative", "negative", "positive", "large"])
def test_softmax_shift_invariant(shift):
    logits = np.random.default_rng(0).normal(0.0, 3.0, (50, 6))
    actual = numerics.softmax(logits + shift)
    assert np.max(np.abs(actual - numerics.softmax(logits))) < 1e-12
    assert np.max(np.abs(actual.sum(axis=-1) - 1.0)) < 1e-12


@pytest.mark.parametrize("num_classes", [2, 3, 10], ids=["c2", "c3", "c10"])
def test_softmax_moves_toward_uniform(num_classes):
    logits = np.random.default_rng(num_classes).normal(0.0, 4.0, (200, num_classes))
    deviations = [
        np.max(np.abs(numerics.softmax(logits, t) - 1 / num_classes), axis=-1) for t in [1.0, 5.0, 10.0, 20.0]
    ]
    for lower, higher in zip(deviations, deviations[1:]):
        assert np.all(higher <= lower + 1e-12)


def test_softmax_batch():
    actual = numerics.softmax([[0.0, 0.0], [math.log(3.0), 0.0]])
    assert np.allclose(actual, [[0.5, 0.5], [0.75, 0.25]])


@pytest.mark.parametrize("temperature", [0.0, -1.0, float("inf")], ids=["zero", "negative", "inf"])
def test_softmax_invalid_temperature(temperature):
    with pytest.raises(InvalidArgumentError, match="temperature"):
        numerics.softmax([1.0, 2.0], temperature)


def test_softmax_empty():
    with pytest.raises(InvalidArgumentError, match="must not be empty"):
        numerics.softmax([])


def test_softmax_nan():
    with pytest.raises(InvalidArgumentError, match="non-finite"):
        numerics.softmax([1.0, float("nan")])


def test_log_softmax_matches_log_of_softmax():
    logits = np.array([[3.0, -2.0, 0.5], [0.0, 0.0, 0.0]])
    assert np.allclose(numerics.log_softmax(logits, 2.0), np.log(numerics.softmax(logits, 2.0)))


def test_sigmoid():
    assert numerics.sigmoid(0.0) == 0.5
    assert np.allclose(numerics.sigmoid(np.array([-50.0, 50.0])), [0.0, 1.0])


def test_cross_entropy_hard():
    assert numerics.cross_entropy_hard(2, [0.25, 0.75]) == pytest.approx(-math.log(0.75))


def test_cross_entropy_hard_clamps_zero():
    assert numerics.cross_entropy_hard(1, [0.0, 1.0]) == pytest.approx(-math.log(numerics.PROBABILITY_FLOOR))


@pytest.mark.parametrize("label", [0, 3], ids=["below", "above"])
def test_cross_entropy_hard_invalid_label(label):
    with pytest.raises(InvalidArgumentError, match="label"):
        numerics.cross_entropy_hard(label, [0.5, 0.5])


def test_cross_entropy_soft():
    actual = numerics.cross_entropy_soft([0.5, 0.5], [0.25, 0.75])
    assert actual == pytest.approx(-0.5 * math.log(0.25) - 0.5 * math.log(0.75))


def test_cross_entropy_soft_one_hot_matches_hard():
    assert numerics.cross_entropy_soft([0.0, 1.0, 0.0], [0.2, 0.5, 0.3]) == pytest.approx(
        numerics.cross_entropy_hard(2, [0.2, 0.5, 0.3])
    )


@pytest.mark.parametrize(
    "label, predicted, expected",
    [
        (1, [1.0, 0.0], 0.0),
        (2, [0.25, 0.25, 0.25, 0.25], math.log(4.0)),
        (1, [0.9, 0.1], -math.log(0.9)),
    ],
    ids=["certain", "uniform", "analytic"],
)
def test_cross_entropy_hard_known_values(label, predicted, expected):
    assert numerics.cross_entropy_hard(label, predicted) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize(
    "target, predicted, expected",
    [
        ([0.5, 0.5], [0.5, 0.5], math.log(2.0)),
        ([0.7, 0.3], [0.6, 0.4], -(0.7 * math.log(0.6) + 0.3 * math.log(0.4))),
    ],
    ids=["uniform-entropy", "analytic"],
)
def test_cross_entropy_soft_known_values(target, predicted, expected):
    assert numerics.cross_entropy_soft(target, predicted) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("num_classes", [2, 3, 5], ids=["c2", "c3", "c5"])
def test_cross_entropy_soft_gibbs_inequality(num_classes):
    rng = np.random.default_rng(num_classes)
    for _ in range(200):
        p, q = rng.dirichlet(np.ones(num_classes), size=2)
        self_entropy = numerics.cross_entropy_soft(p, p)
        assert self_entropy == pytest.approx(entropy(p), abs=1e-12)
        assert numerics.cross_entropy_soft(p, q) >= self_entropy - 1e-12


def test_cross_entropy_soft_length_mismatch():
    with pytest.raises(InvalidArgumentError, match="does not match target length"):
        numerics.cross_entropy_soft([0.5, 0.5], [0.2, 0.3, 0.5])


def test_batch_cross_entropies():
    probs = np.array([[0.1, 0.9], [0.6, 0.4]])
    assert np.allclose(numerics.hard_cross_entropies(np.array([2, 1]), probs), [-math.log(0.9), -math.log(0.6)])
    assert np.allclose(
        numerics.soft_cross_entropies(np.array([[0.5, 0.5], [1.0, 0.0]]), probs),
        [numerics.cross_entropy_soft([0.5, 0.5], probs[0]), -math.log(0.6)],
    )


def test_check_gradient_quadratic():
    error = numerics.check_gradient(lambda x: float(np.sum(x**2)), lambda x: 2 * x, [1.0, -2.0, 0.5])
    assert error < 1e-8


def test_check_gradient_detects_wrong_gradient():
    error = numerics.check_gradient(lambda x: float(np.sum(x**2)), lambda x: x, [1.0, -2.0])
    assert error > 0.1


def test_check_gradient_scalar_square():
    error = numerics.check_gradient(lambda w: float(w[0] ** 2), lambda w: 2 * w, [3.0])
    assert error < 1e-9


def test_check_gradient_constant():
    assert numerics.check_gradient(lambda w: 1.5, lambda w: np.zeros(2), [0.3, -0.7]) == 0.0


def test_check_gradient_spurious_small_gradient():
    # a 1e-7 gradient against a true 0 must not hide below the floor
    error = numerics.check_gradient(lambda w: 0.0, lambda w: np.array([1e-7]), [0.0])
    assert error == pytest.approx(1.0)


def test_check_gradient_non_finite():
    with pytest.raises(NumericError, match="gradient check"):
        numerics.check_gradient(lambda x: float(np.sum(x)), lambda x: x * np.inf, [1.0])


def test_check_gradient_shape_mismatch():
    with pytest.raises(InvalidArgumentError, match="returned 1 entries for 2 parameters"):
        numerics.check_gradient(lambda x: 0.0, lambda x: np.zeros(1), [1.0, 2.0])


@pytest.mark.parametrize(
    "seed, stream",
    [(11, "stream"), (0, "root"), (2**64 - 1, "policy/epoch-3")],
    ids=["plain", "root", "max-seed"],
)
def test_seeded_rng_reproducible(seed, stream):
    a = numerics.SeededRng(seed, stream)
    b = numerics.SeededRng(seed, stream)
    assert np.array_equal(a.random(10000), b.random(10000))
    assert np.array_equal(a.integers(0, 7, 10000), b.integers(0, 7, 10000))


def test_seeded_rng_streams_differ():
    a = numerics.SeededRng(11, "first").random(5)
    b = numerics.SeededRng(11, "second").random(5)
    assert not np.array_equal(a, b)


def test_seeded_rng_child_is_stable():
    parent = numerics.SeededRng(5, "root")
    before = parent.child("epoch-1").permutation(10)
    parent.random(100)
    after = parent.child("epoch-1").permutation(10)
    assert np.array_equal(before, after)
    assert parent.child("epoch-1").stream == "root/epoch-1"


def test_seeded_rng_choice_without_replacement():
    actual = numerics.SeededRng(0).choice(10, 10)
    assert sorted(actual.tolist()) == list(range(10))


def test_seeded_rng_repr():
    assert repr(numerics.SeededRng(3, "x")) == "<SeededRng algorithm=PCG64 seed=3 stream='x'>"


@pytest.mark.parametrize("seed", [-1, 2**64], ids=["negative", "too-large"])
def test_seeded_rng_invalid_seed(seed):
    with pytest.raises(InvalidArgumentError, match="64-bit unsigned"):
        numerics.SeededRng(seed)


def test_as_real_array():
    actual = numerics.as_real_array([1, 2])
    assert actual.dtype == np.float64
