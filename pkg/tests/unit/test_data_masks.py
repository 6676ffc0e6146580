"""Tests for IF mask derivation, weak boxes and label noise."""

import numpy as np
import pytest

from mocl_seg.core.data import apply_label_noise, boxes_from_mask, derive_mask_from_if
from mocl_seg.core.data.masks import instances_from_mask, remove_small_components
from mocl_seg.core.data.models import BoxAnnotation, BoxSource
from mocl_seg.core.errors import MaskParameterError
from tests.conftest import disk_instances


class TestDeriveMaskFromIf:
    """Tests for derive_mask_from_if()."""

    def test_threshold_inclusive(self) -> None:
        """Test pixels equal to the threshold are foreground."""
        channel = np.zeros((20, 20), dtype=np.uint8)
        channel[5:10, 5:10] = 100
        channel[12:16, 12:16] = 99
        mask = derive_mask_from_if(channel, 100, min_size=1)
        assert mask.dtype == np.uint8
        assert mask.sum() == 25
        assert mask[5:10, 5:10].all()

    def test_small_components_removed(self) -> None:
        """Test components under min_size disappear, larger ones stay."""
        channel = np.zeros((20, 20), dtype=np.uint8)
        channel[2:6, 2:6] = 200  # 16 px
        channel[15, 15] = 255  # speckle
        channel[10:12, 10:12] = 200  # 4 px
        mask = derive_mask_from_if(channel, 100, min_size=10)
        assert mask.sum() == 16
        assert mask[2:6, 2:6].all()

    def test_diagonal_neighbours_connected(self) -> None:
        """Test components are 8-connected."""
        mask = np.zeros((6, 6), dtype=bool)
        mask[np.arange(5), np.arange(5)] = True
        assert remove_small_components(mask, 5).sum() == 5

    def test_empty_channel(self) -> None:
        """Test an empty channel yields an empty mask."""
        assert derive_mask_from_if(np.zeros((8, 8), np.uint8), 1).sum() == 0

    @pytest.mark.parametrize("threshold", [-1.0, 256.0, float("nan")])
    def test_threshold_out_of_range(self, threshold: float) -> None:
        """Test thresholds outside the uint8 range are rejected."""
        with pytest.raises(MaskParameterError):
            derive_mask_from_if(np.zeros((8, 8), np.uint8), threshold)

    def test_sixteen_bit_range(self) -> None:
        """Test 16-bit channels accept thresholds above 255."""
        channel = np.full((8, 8), 1000, dtype=np.uint16)
        assert derive_mask_from_if(channel, 500, min_size=0).all()


class TestBoxesFromMask:
    """Tests for boxes_from_mask()."""

    def test_tight_boxes(self, two_disks: np.ndarray) -> None:
        """Test tight boxes are the exclusive bounding boxes in label order."""
        boxes = boxes_from_mask(two_disks, BoxSource.TIGHT, class_name="podocyte")
        assert [(b.x0, b.y0, b.x1, b.y1) for b in boxes] == [(4, 4, 13, 13), (18, 18, 27, 27)]
        assert all(b.source is BoxSource.TIGHT and b.class_name == "podocyte" for b in boxes)

    def test_random_boxes_bounded(self, two_disks: np.ndarray) -> None:
        """Test jittered edges move at most jitter_frac * side and stay inside."""
        tight = boxes_from_mask(two_disks, BoxSource.TIGHT)
        jittered = boxes_from_mask(two_disks, BoxSource.RANDOM, jitter_frac=0.2, seed=3)
        for t, j in zip(tight, jittered, strict=True):
            limit = 0.2 * t.width
            for a, b in ((t.x0, j.x0), (t.x1, j.x1), (t.y0, j.y0), (t.y1, j.y1)):
                assert abs(a - b) <= limit
            assert j.fits(32, 32)
            assert j.source is BoxSource.RANDOM

    def test_random_is_seeded(self, two_disks: np.ndarray) -> None:
        """Test the same seed gives the same boxes."""
        a = boxes_from_mask(two_disks, BoxSource.RANDOM, seed=9)
        b = boxes_from_mask(two_disks, BoxSource.RANDOM, seed=9)
        assert a == b

    def test_empty_mask(self) -> None:
        """Test an empty map yields no boxes."""
        assert boxes_from_mask(np.zeros((8, 8), np.int32)) == []

    def test_zero_jitter_random_rejected(self, two_disks: np.ndarray) -> None:
        """Test random mode needs a positive jitter."""
        with pytest.raises(MaskParameterError):
            boxes_from_mask(two_disks, BoxSource.RANDOM, jitter_frac=0.0)

    def test_human_mode_rejected(self, two_disks: np.ndarray) -> None:
        """Test boxes derived from masks cannot claim to be human drawn."""
        with pytest.raises(MaskParameterError):
            boxes_from_mask(two_disks, "human")


class TestBoxAnnotation:
    """Tests for the box model."""

    def test_empty_box_rejected(self) -> None:
        """Test zero-width boxes fail validation."""
        with pytest.raises(ValueError, match="empty box"):
            BoxAnnotation(class_name="podocyte", x0=3, y0=0, x1=3, y1=4)

    def test_json_record(self) -> None:
        """Test the JSON Lines record layout."""
        box = BoxAnnotation(class_name="mesangial", x0=1, y0=2, x1=5, y1=9)
        assert box.to_json() == {"class": "mesangial", "bbox": [1, 2, 5, 9], "source": "human"}
        assert BoxAnnotation.from_json(box.to_json()) == box
        assert box.area == 28


class TestInstances:
    """Tests for instances_from_mask() and apply_label_noise()."""

    def test_components_labelled(self, two_disks: np.ndarray) -> None:
        """Test two separated disks get labels 1 and 2."""
        labels = instances_from_mask(two_disks > 0)
        assert labels.dtype == np.int32
        assert set(np.unique(labels)) == {0, 1, 2}

    def test_no_noise_is_identity(self, two_disks: np.ndarray) -> None:
        """Test zero shift and zero dropout reproduce the input."""
        out = apply_label_noise(two_disks, seed=0, max_shift=0, dropout=0.0)
        np.testing.assert_array_equal(out, two_disks)

    def test_full_dropout_empties(self, two_disks: np.ndarray) -> None:
        """Test dropout 1 removes every instance."""
        out = apply_label_noise(two_disks, seed=0, max_shift=2, dropout=1.0)
        assert not out.any()

    def test_shift_changes_area_within_bounds(self) -> None:
        """Test shifted boundaries stay within max_shift of the expert disk."""
        labels = disk_instances((40, 40), [(20, 20)], 8)
        out = apply_label_noise(labels, seed=4, max_shift=2, dropout=0.0)
        assert out.max() == 1
        outer = disk_instances((40, 40), [(20, 20)], 11) > 0
        inner = disk_instances((40, 40), [(20, 20)], 5) > 0
        assert not (out.astype(bool) & ~outer).any()
        assert (out.astype(bool) | ~inner).all()

    def test_seeded(self, two_disks: np.ndarray) -> None:
        """Test the noise model is deterministic for a seed."""
        a = apply_label_noise(two_disks, seed=11)
        b = apply_label_noise(two_disks, seed=11)
        np.testing.assert_array_equal(a, b)
