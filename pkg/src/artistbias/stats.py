"""Significance testing for per-fold metric values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class TTestResult:
    significant: bool
    p_value: float
    statistic: float


def t_test(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TTestResult:
    """
    Two-sample Welch t-test; significant iff ``p < alpha``.

    When both samples have zero variance the t statistic is undefined.  Then
    equal means give ``p = 1`` and different means give ``p = 0`` (the
    samples are point masses at different values).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        if a[0] == b[0]:
            return TTestResult(False, 1.0, 0.0)
        return TTestResult(alpha > 0, 0.0, math.copysign(math.inf, a[0] - b[0]))
    res = stats.ttest_ind(a, b, equal_var=False)
    p = float(res.pvalue)
    return TTestResult(p < alpha, p, float(res.statistic))
