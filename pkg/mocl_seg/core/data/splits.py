"""
Train/val/test splitting and training-set subsampling.

Split rounding: each split gets floor(N * r_i / sum(r)), the remainder goes to train.
Subsampling keeps max(1, round_half_up(fraction * N)) units.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np

from mocl_seg.core.data.models import (
    DatasetManifest,
    PatchRef,
    SplitAssignment,
    Stratum,
    SubsampleUnit,
)
from mocl_seg.core.errors import SplitError, StratificationError, SubsampleError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
MIN_PER_STRATUM = 3


def split_sizes(n: int, ratios: Sequence[int]) -> tuple[int, int, int]:
    """Floor every split, assign the remainder to train."""
    total = sum(ratios)
    val = (n * ratios[1]) // total
    test = (n * ratios[2]) // total
    return n - val - test, val, test


def split_dataset(
    manifest: DatasetManifest,
    ratios: tuple[int, int, int] = (6, 1, 3),
    seed: int = DEFAULT_SEED,
    stratify: bool = False,
) -> SplitAssignment:
    """
    Partition the manifest ids into train/val/test.

    With stratify=True the overall sizes are still split_sizes(N); they are shared out
    across strata so every stratum's count in every split is within one sample of its
    proportional share.

    Raises:
        SplitError: non-positive ratios or empty manifest
        StratificationError: a stratum holds fewer than 3 samples
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise SplitError(f"ratios must be three positive integers, got {tuple(ratios)}")
    ids = sorted(manifest.ids)
    if not ids:
        raise SplitError("manifest has no samples")

    rng = np.random.default_rng(seed)
    train: list[str] = []
    val: list[str] = []
    test: list[str] = []

    if stratify:
        groups: dict[Stratum, list[str]] = {}
        for sample_id, stratum in sorted(manifest.strata().items()):
            groups.setdefault(stratum, []).append(sample_id)
        order = sorted(groups, key=lambda s: s.value)
        for stratum in order:
            if len(groups[stratum]) < MIN_PER_STRATUM:
                raise StratificationError(
                    f"stratum '{stratum.value}' has {len(groups[stratum])} samples, "
                    f"at least {MIN_PER_STRATUM} are needed",
                    context={"stratum": stratum.value},
                )
        counts = allocate_strata(
            [len(groups[s]) for s in order], split_sizes(len(ids), ratios)
        )
        for stratum, sizes in zip(order, counts, strict=True):
            tr, va, te = _partition(groups[stratum], sizes, rng)
            train += tr
            val += va
            test += te
    else:
        train, val, test = _partition(ids, split_sizes(len(ids), ratios), rng)

    split = SplitAssignment(
        train=sorted(train),
        val=sorted(val),
        test=sorted(test),
        seed=seed,
        ratios=(int(ratios[0]), int(ratios[1]), int(ratios[2])),
    )
    logger.info(
        "split dataset",
        extra={"train": len(split.train), "val": len(split.val), "test": len(split.test)},
    )
    return split


def allocate_strata(
    strata: Sequence[int], totals: Sequence[int]
) -> list[tuple[int, int, int]]:
    """
    Integer split sizes per stratum with exact row and column sums.

    Row s sums to strata[s], column j to totals[j]; every cell is within one of
    strata[s] * totals[j] / sum(strata). The leftover units go row by row, largest
    leftover first, to the columns with the most units still owed.
    """
    n = sum(strata)
    quota = np.outer(np.asarray(strata, dtype=np.float64), totals) / n
    cells = np.floor(quota + 1e-9).astype(np.int64)
    frac = quota - cells
    row_left = np.asarray(strata) - cells.sum(axis=1)
    col_left = np.asarray(totals) - cells.sum(axis=0)
    for s in sorted(range(len(strata)), key=lambda r: (-row_left[r], r)):
        for _ in range(int(row_left[s])):
            open_cols = [j for j in range(3) if col_left[j] > 0 and cells[s, j] <= quota[s, j]]
            j = max(open_cols, key=lambda c: (col_left[c], frac[s, c], -c))
            cells[s, j] += 1
            col_left[j] -= 1
        row_left[s] = 0
    return [(int(a), int(b), int(c)) for a, b, c in cells]


def _partition(
    ids: list[str], sizes: Sequence[int], rng: np.random.Generator
) -> tuple[list[str], list[str], list[str]]:
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train, n_val = int(sizes[0]), int(sizes[1])
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def subsample_size(n: int, fraction: float) -> int:
    """max(1, round_half_up(fraction * n))."""
    return max(1, math.floor(fraction * n + 0.5))


def subsample_training(
    split: SplitAssignment,
    fraction: float,
    seed: int = DEFAULT_SEED,
    unit: SubsampleUnit = SubsampleUnit.PATCH,
    patch_index: dict[str, list[PatchRef]] | None = None,
) -> SplitAssignment:
    """
    Reduce the training set to a fraction of its units.

    In patch mode the training list becomes patch ids ("<sample>@<y>_<x>") drawn from
    patch_index; without an index every sample is a single patch. Val and test are
    returned untouched.

    Raises:
        SubsampleError: fraction outside (0, 1] or empty training set
    """
    if not (0.0 < fraction <= 1.0):
        raise SubsampleError(f"fraction must be in (0, 1], got {fraction}")

    if unit is SubsampleUnit.PATCH and patch_index is not None:
        pool = sorted(ref.id for sid in split.train for ref in patch_index.get(sid, []))
    else:
        pool = sorted(split.train)
    if not pool:
        raise SubsampleError("training set is empty")

    keep = subsample_size(len(pool), fraction)
    if keep >= len(pool):
        chosen = pool
    else:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(pool), size=keep, replace=False)
        chosen = sorted(pool[i] for i in picked)

    logger.info(
        "subsampled training set",
        extra={"unit": unit.value, "fraction": fraction, "pool": len(pool), "kept": len(chosen)},
    )
    return split.model_copy(update={"train": chosen, "unit": unit, "fraction": fraction})


def sample_of(unit_id: str) -> str:
    """Sample id of a training unit (patch ids carry an '@' suffix)."""
    return unit_id.split("@", 1)[0]
