"""Tests for splitting and training-set subsampling."""

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mocl_seg.core.data import split_dataset, subsample_training
from mocl_seg.core.data.models import (
    DatasetManifest,
    PatchRef,
    SampleRecord,
    Stratum,
    SubsampleUnit,
    TileCoord,
)
from mocl_seg.core.data.splits import allocate_strata, sample_of, split_sizes, subsample_size
from mocl_seg.core.errors import SplitError, StratificationError, SubsampleError


def make_manifest(n: int, injured_every: int = 0) -> DatasetManifest:
    """In-memory manifest; files are never touched by the splitter."""
    samples = [
        SampleRecord(
            id=f"s{i:04d}",
            image_path=Path(f"/nowhere/s{i:04d}.png"),
            stratum=(
                Stratum.INJURED if injured_every and i % injured_every == 0 else Stratum.NORMAL
            ),
        )
        for i in range(n)
    ]
    return DatasetManifest(root_path=Path("/nowhere"), classes=["podocyte"], samples=samples)


class TestSplitSizes:
    """Tests for split_sizes()."""

    def test_allocate_strata_sums(self) -> None:
        """Test the per-stratum table keeps row and column sums."""
        counts = allocate_strata([5, 5], (6, 1, 3))
        assert [sum(row) for row in counts] == [5, 5]
        assert tuple(map(sum, zip(*counts, strict=True))) == (6, 1, 3)

    def test_default_ratio_on_480(self) -> None:
        """Test 6:1:3 over 480 samples."""
        assert split_sizes(480, (6, 1, 3)) == (288, 48, 144)

    def test_remainder_goes_to_train(self) -> None:
        """Test floors on val/test with the remainder in train."""
        assert split_sizes(11, (6, 1, 3)) == (7, 1, 3)

    @given(n=st.integers(min_value=1, max_value=5000))
    def test_sizes_sum(self, n: int) -> None:
        """Test sizes always add up to n."""
        assert sum(split_sizes(n, (6, 1, 3))) == n


class TestSplitDataset:
    """Tests for split_dataset()."""

    def test_partition_is_disjoint_and_complete(self) -> None:
        """Test every id lands in exactly one split."""
        manifest = make_manifest(100)
        split = split_dataset(manifest, seed=1)
        union = set(split.train) | set(split.val) | set(split.test)
        assert union == set(manifest.ids)
        assert len(split.train) + len(split.val) + len(split.test) == 100
        assert split.sizes == (60, 10, 30)

    def test_same_seed_same_split(self) -> None:
        """Test splitting is deterministic for a seed."""
        manifest = make_manifest(50)
        assert split_dataset(manifest, seed=5) == split_dataset(manifest, seed=5)

    def test_different_seed_differs(self) -> None:
        """Test a different seed reorders membership."""
        manifest = make_manifest(50)
        assert split_dataset(manifest, seed=5).test != split_dataset(manifest, seed=6).test

    def test_invariant_to_manifest_order(self) -> None:
        """Test ids are sorted before shuffling."""
        manifest = make_manifest(40)
        reversed_manifest = manifest.model_copy(update={"samples": manifest.samples[::-1]})
        assert split_dataset(manifest, seed=3) == split_dataset(reversed_manifest, seed=3)

    def test_lists_sorted(self) -> None:
        """Test split lists are written sorted."""
        split = split_dataset(make_manifest(30), seed=2)
        assert split.train == sorted(split.train)
        assert split.test == sorted(split.test)

    def test_stratified_proportions(self) -> None:
        """Test each split keeps the injured share within one sample."""
        manifest = make_manifest(100, injured_every=4)
        split = split_dataset(manifest, seed=0, stratify=True)
        strata = manifest.strata()
        for ids, ratio in ((split.train, 0.6), (split.val, 0.1), (split.test, 0.3)):
            injured = sum(strata[i] is Stratum.INJURED for i in ids)
            assert abs(injured - 25 * ratio) <= 1

    def test_stratified_sizes_match_plain(self) -> None:
        """Test five normal and five injured samples still split 6/1/3 with a val sample."""
        manifest = make_manifest(10, injured_every=2)
        split = split_dataset(manifest, seed=0, stratify=True)
        assert split.sizes == (6, 1, 3)
        assert split.sizes == split_dataset(manifest, seed=0).sizes

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(min_value=12, max_value=120),
        injured_every=st.integers(min_value=2, max_value=4),
        ratios=st.tuples(
            st.integers(min_value=1, max_value=8),
            st.integers(min_value=1, max_value=3),
            st.integers(min_value=1, max_value=5),
        ),
    )
    def test_stratified_totals_exact(
        self, n: int, injured_every: int, ratios: tuple[int, int, int]
    ) -> None:
        """Test stratified sizes equal split_sizes and each stratum is within one of its share."""
        manifest = make_manifest(n, injured_every=injured_every)
        strata = manifest.strata()
        n_injured = sum(s is Stratum.INJURED for s in strata.values())
        split = split_dataset(manifest, ratios=ratios, seed=1, stratify=True)
        totals = split_sizes(n, ratios)
        assert split.sizes == totals
        for ids, total in zip((split.train, split.val, split.test), totals, strict=True):
            injured = sum(strata[i] is Stratum.INJURED for i in ids)
            assert abs(injured - n_injured * total / n) < 1 + 1e-9


    def test_small_stratum_rejected(self) -> None:
        """Test stratification needs at least three samples per stratum."""
        manifest = make_manifest(20, injured_every=10)
        with pytest.raises(StratificationError, match="injured"):
            split_dataset(manifest, stratify=True)

    @pytest.mark.parametrize("ratios", [(6, 0, 3), (0, 1, 1), (-1, 1, 1)])
    def test_bad_ratios(self, ratios: tuple[int, int, int]) -> None:
        """Test non-positive ratios are rejected."""
        with pytest.raises(SplitError):
            split_dataset(make_manifest(10), ratios=ratios)

    def test_empty_manifest(self) -> None:
        """Test an empty manifest cannot be split."""
        with pytest.raises(SplitError):
            split_dataset(make_manifest(0))


class TestSubsample:
    """Tests for subsample_training()."""

    @pytest.mark.parametrize(
        ("n", "fraction", "expected"),
        [(480, 1.0, 480), (480, 0.04, 19), (480, 0.005, 2), (10, 0.01, 1), (10, 0.25, 3)],
    )
    def test_subsample_size(self, n: int, fraction: float, expected: int) -> None:
        """Test round-half-up with a floor of one unit."""
        assert subsample_size(n, fraction) == expected

    def test_keeps_val_and_test(self) -> None:
        """Test subsampling touches only the training list."""
        split = split_dataset(make_manifest(100), seed=0)
        reduced = subsample_training(split, 0.1, seed=1, unit=SubsampleUnit.SAMPLE)
        assert len(reduced.train) == 6
        assert set(reduced.train) <= set(split.train)
        assert reduced.val == split.val
        assert reduced.test == split.test
        assert reduced.fraction == 0.1

    def test_full_fraction_keeps_everything(self) -> None:
        """Test fraction 1.0 keeps the whole training set."""
        split = split_dataset(make_manifest(20), seed=0)
        assert subsample_training(split, 1.0).train == split.train

    def test_patch_mode(self) -> None:
        """Test patch mode draws tile ids from the index."""
        split = split_dataset(make_manifest(10), seed=0)
        index = {
            sid: [PatchRef(sample_id=sid, tile=TileCoord(y=y, x=0, size=32)) for y in (0, 32)]
            for sid in split.train
        }
        reduced = subsample_training(
            split, 0.5, seed=0, unit=SubsampleUnit.PATCH, patch_index=index
        )
        assert len(reduced.train) == len(split.train)
        assert all("@" in unit for unit in reduced.train)
        assert {sample_of(u) for u in reduced.train} <= set(split.train)
        assert reduced.unit is SubsampleUnit.PATCH

    @pytest.mark.parametrize("fraction", [0.0, -0.1, 1.5])
    def test_fraction_range(self, fraction: float) -> None:
        """Test fractions outside (0, 1] are rejected."""
        split = split_dataset(make_manifest(10), seed=0)
        with pytest.raises(SubsampleError):
            subsample_training(split, fraction)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    def test_nested_seed_determinism(self, seed: int) -> None:
        """Test the same seed picks the same subset."""
        split = split_dataset(make_manifest(60), seed=0)
        a = subsample_training(split, 0.2, seed=seed, unit=SubsampleUnit.SAMPLE)
        b = subsample_training(split, 0.2, seed=seed, unit=SubsampleUnit.SAMPLE)
        assert a.train == b.train


def test_sample_of() -> None:
    """Test patch ids map back to their sample."""
    assert sample_of("p0001@32_0") == "p0001"
    assert sample_of("p0001") == "p0001"
