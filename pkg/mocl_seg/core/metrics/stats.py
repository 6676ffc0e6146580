"""
Wilcoxon signed-rank test for paired per-image scores.

Zero differences are dropped. Ranks of |d| use average ranks for ties. The exact
null distribution is built over doubled ranks (always integers), which counts the
same outcomes as enumerating all 2^n sign assignments.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from enum import Enum

import numpy as np
from pydantic import BaseModel
from scipy import stats

from mocl_seg.core.errors import DegenerateSampleError, MetricShapeError

EXACT_MAX_N = 25


class WilcoxonMode(Enum):
    EXACT = "exact"
    APPROX = "approx"
    AUTO = "auto"


class WilcoxonResult(BaseModel, frozen=True):
    statistic: float
    p_value: float
    n: int
    method: WilcoxonMode


def signed_ranks(a: Sequence[float], b: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """(ranks of |d|, signs of d) for the non-zero differences."""
    if len(a) != len(b):
        raise MetricShapeError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise MetricShapeError("paired samples are empty")
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0.0]
    if d.size == 0:
        raise DegenerateSampleError("all paired differences are zero")
    return stats.rankdata(np.abs(d), method="average"), np.sign(d)


def exact_lower_tail(doubled_ranks: np.ndarray, threshold: int) -> float:
    """P(W+ <= threshold) under the null, all quantities in doubled-rank units."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks.astype(np.int64):
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return float(counts[: threshold + 1].sum() / 2.0 ** doubled_ranks.size)


def wilcoxon_signed_rank(
    a: Sequence[float],
    b: Sequence[float],
    mode: WilcoxonMode | str = WilcoxonMode.AUTO,
) -> WilcoxonResult:
    """
    Two-sided Wilcoxon signed-rank test; statistic = min(W+, W-).

    auto uses the exact distribution for n <= 25 non-zero differences and the normal
    approximation (continuity and tie corrected) beyond.

    Raises:
        MetricShapeError: lengths differ or samples are empty
        DegenerateSampleError: every difference is zero
    """
    mode = WilcoxonMode(mode)
    ranks, signs = signed_ranks(a, b)
    n = int(ranks.size)
    w_plus = float(ranks[signs > 0].sum())
    w_minus = float(ranks[signs < 0].sum())
    statistic = min(w_plus, w_minus)

    use_exact = mode is WilcoxonMode.EXACT or (mode is WilcoxonMode.AUTO and n <= EXACT_MAX_N)
    if use_exact:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = 2.0 * exact_lower_tail(doubled, int(round(2.0 * statistic)))
        return WilcoxonResult(
            statistic=statistic, p_value=min(1.0, p), n=n, method=WilcoxonMode.EXACT
        )

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float((tie_counts**3 - tie_counts).sum()) / 48.0
    if variance <= 0:
        raise DegenerateSampleError("zero variance in the signed-rank statistic")
    z = min(0.0, statistic - mean + 0.5) / math.sqrt(variance)
    p = 2.0 * float(stats.norm.cdf(z))
    return WilcoxonResult(statistic=statistic, p_value=min(1.0, p), n=n, method=WilcoxonMode.APPROX)
