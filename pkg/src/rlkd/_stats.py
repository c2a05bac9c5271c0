# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import logging
import typing

import numpy as np
from scipy import stats

from rlkd._exceptions import InvalidArgumentError
from rlkd._numerics import as_real_array

log = logging.getLogger(__name__)

SIGNIFICANCE_THRESHOLD = 0.05


class Summary(typing.NamedTuple):
    """Mean and standard deviation of a sample."""

    mean: float
    stdev: float
    count: int


class TTestResult(typing.NamedTuple):
    """Outcome of a two-sided Welch t-test."""

    statistic: float
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_THRESHOLD


def summarize(
    samples: typing.Sequence[float],
    ddof: int = 1,
) -> Summary:
    """Mean and standard deviation, by default with the ``n - 1`` denominator.

    A single sample has a standard deviation of 0.
    """
    values = as_real_array(samples, "samples").reshape(-1)
    stdev = float(np.std(values, ddof=ddof)) if values.size > ddof else 0.0
    return Summary(float(np.mean(values)), stdev, int(values.size))


def welch_ttest(
    first: typing.Sequence[float],
    second: typing.Sequence[float],
) -> TTestResult:
    """Two-sided t-test without assuming equal variances.

    Two samples without any spread cannot be tested. They get a p-value of 1
    when their means are equal and 0 otherwise.

    Args:
        first: The first sample, at least two values.
        second: The second sample, at least two values.

    Returns:
        TTestResult: The t statistic and the p-value.
    """
    a = as_real_array(first, "first").reshape(-1)
    b = as_real_array(second, "second").reshape(-1)
    if a.size < 2 or b.size < 2:
        raise InvalidArgumentError("samples", f"need at least 2 values per sample, got {a.size} and {b.size}")

    if np.ptp(a) == 0 and np.ptp(b) == 0:
        equal = bool(a[0] == b[0])
        log.debug("Degenerate t-test between constant samples, means equal: %s", equal)
        return TTestResult(0.0 if equal else float("inf") * np.sign(a[0] - b[0]), 1.0 if equal else 0.0)

    result = stats.ttest_ind(a, b, equal_var=False)
    return TTestResult(float(result.statistic), float(result.pvalue))


__all__ = [
    "SIGNIFICANCE_THRESHOLD",
    "Summary",
    "TTestResult",
    "summarize",
    "welch_ttest",
]
