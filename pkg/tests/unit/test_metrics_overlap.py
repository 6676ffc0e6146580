"""Tests for pixel-level metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mocl_seg.core.errors import MetricShapeError, UndefinedMetricError
from mocl_seg.core.metrics import best_f1, dice, iou, pixel_auc, precision, recall
from mocl_seg.core.metrics.overlap import f1_at, threshold_grid

masks = hnp.arrays(np.uint8, (6, 6), elements=st.integers(0, 1))


class TestOverlap:
    """Tests for dice, iou, precision and recall."""

    def test_known_values(self) -> None:
        """Test a hand-computed example: |P|=4, |G|=6, TP=3."""
        pred = np.zeros((4, 4), np.uint8)
        gt = np.zeros((4, 4), np.uint8)
        pred[0, :4] = 1
        pred[0, 3] = 0
        pred[1, 0] = 1
        gt[0, :3] = 1
        gt[2, :3] = 1
        assert dice(pred, gt) == pytest.approx(2 * 3 / 10)
        assert iou(pred, gt) == pytest.approx(3 / 7)
        assert precision(pred, gt) == pytest.approx(3 / 4)
        assert recall(pred, gt) == pytest.approx(3 / 6)

    def test_both_empty(self) -> None:
        """Test empty-vs-empty scores 1 for every overlap metric."""
        empty = np.zeros((5, 5), np.uint8)
        for metric in (dice, iou, precision, recall):
            assert metric(empty, empty) == 1.0

    def test_one_empty(self) -> None:
        """Test empty prediction against non-empty ground truth."""
        gt = np.zeros((5, 5), np.uint8)
        gt[2, 2] = 1
        empty = np.zeros_like(gt)
        assert dice(empty, gt) == 0.0
        assert precision(empty, gt) == 0.0
        assert recall(gt, empty) == 0.0

    def test_shape_mismatch(self) -> None:
        """Test differently shaped masks are rejected."""
        with pytest.raises(MetricShapeError):
            dice(np.zeros((3, 3)), np.zeros((3, 4)))

    @given(pred=masks, gt=masks)
    def test_dice_iou_relation(self, pred: np.ndarray, gt: np.ndarray) -> None:
        """Test dice == 2 iou / (1 + iou) and both lie in [0, 1]."""
        d, j = dice(pred, gt), iou(pred, gt)
        assert 0.0 <= j <= d <= 1.0
        assert d == pytest.approx(2 * j / (1 + j))

    @given(pred=masks, gt=masks)
    def test_dice_symmetric(self, pred: np.ndarray, gt: np.ndarray) -> None:
        """Test dice does not depend on argument order."""
        assert dice(pred, gt) == dice(gt, pred)


class TestAuc:
    """Tests for pixel_auc()."""

    def test_perfect_ranking(self) -> None:
        """Test a probability that separates the classes scores 1."""
        gt = np.array([[0, 0, 1, 1]])
        assert pixel_auc(np.array([[0.1, 0.2, 0.8, 0.9]]), gt) == 1.0
        assert pixel_auc(np.array([[0.9, 0.8, 0.2, 0.1]]), gt) == 0.0

    def test_ties_count_half(self) -> None:
        """Test a constant probability scores 0.5."""
        gt = np.array([[0, 1, 0, 1, 1]])
        assert pixel_auc(np.full((1, 5), 0.3), gt) == pytest.approx(0.5)

    def test_matches_pair_count(self, rng: np.random.Generator) -> None:
        """Test against the pairwise-comparison definition."""
        prob = rng.integers(0, 5, (6, 6)) / 4.0
        gt = (rng.random((6, 6)) > 0.5).astype(np.uint8)
        pos, neg = prob[gt == 1], prob[gt == 0]
        expected = np.mean([(p > n) + 0.5 * (p == n) for p in pos for n in neg])
        assert pixel_auc(prob, gt) == pytest.approx(expected)

    def test_single_class_undefined(self) -> None:
        """Test all-background ground truth has no AUC."""
        with pytest.raises(UndefinedMetricError):
            pixel_auc(np.random.default_rng(0).random((4, 4)), np.zeros((4, 4)))


class TestBestF1:
    """Tests for best_f1() and threshold_grid()."""

    def test_grid(self) -> None:
        """Test the threshold grid runs from step to 1 - step."""
        grid = threshold_grid(0.01)
        assert len(grid) == 99
        assert grid[0] == 0.01
        assert grid[-1] == 0.99
        assert threshold_grid(0.25) == [0.25, 0.5, 0.75]

    def test_separable_map(self) -> None:
        """Test a separable map reaches F1 1 at the lowest separating threshold."""
        prob = np.array([[0.1, 0.2, 0.7, 0.9]])
        gt = np.array([[0, 0, 1, 1]])
        score, threshold = best_f1(prob, gt, step=0.1)
        assert score == 1.0
        assert threshold == pytest.approx(0.3)

    def test_at_least_fixed_threshold(self, rng: np.random.Generator) -> None:
        """Test best F1 is never below the F1 at 0.5."""
        prob = rng.random((10, 10))
        gt = (rng.random((10, 10)) > 0.6).astype(np.uint8)
        score, _ = best_f1(prob, gt)
        assert score >= f1_at(prob, gt, 0.5)

    def test_empty_ground_truth(self) -> None:
        """Test empty ground truth gives (0, step)."""
        assert best_f1(np.zeros((3, 3)), np.zeros((3, 3)), step=0.05) == (0.0, 0.05)

    @pytest.mark.parametrize("step", [0.0, 1.0, -0.1])
    def test_bad_step(self, step: float) -> None:
        """Test steps outside (0, 1) are rejected."""
        with pytest.raises(ValueError, match="step"):
            best_f1(np.zeros((2, 2)), np.ones((2, 2)), step=step)


@settings(max_examples=25, deadline=None)
@given(
    prob=hnp.arrays(np.float64, (6, 6), elements=st.floats(0, 1)),
    gt=masks,
)
def test_auc_in_unit_interval(prob: np.ndarray, gt: np.ndarray) -> None:
    """Test AUC lies in [0, 1] whenever it is defined."""
    if gt.all() or not gt.any():
        return
    assert 0.0 <= pixel_auc(prob, gt) <= 1.0
