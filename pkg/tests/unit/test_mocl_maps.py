"""Tests for the corrective-learning maps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mocl_seg.core.errors import EmptyAnnotationError, EmptySelectionError, ValidationError
from mocl_seg.core.mocl import (
    Aggregation,
    ConfidenceMap,
    confidence_map,
    select_topk,
    similarity_map,
    weight_maps,
)
from mocl_seg.core.mocl.maps import TopKSelection, resample_nearest

PERCENT = st.integers(0, 100).map(lambda v: v / 100)


def _selection(*vectors: list[float]) -> TopKSelection:
    embeddings = np.array(vectors, dtype=np.float64)
    n = embeddings.shape[0]
    return TopKSelection(
        embeddings=embeddings,
        weights=np.ones(n),
        locations=np.zeros((n, 2), dtype=np.int64),
        k_requested=n,
    )


class TestConfidenceMap:
    """Tests for confidence_map()."""

    def test_channel_selected(self) -> None:
        """Test the requested class channel is returned."""
        prob = np.stack([np.full((3, 3), 0.2), np.full((3, 3), 0.7)], axis=2)
        assert confidence_map(prob, 1).W.mean() == pytest.approx(0.7)

    def test_bad_index(self) -> None:
        """Test a class index outside the channels raises."""
        with pytest.raises(ValidationError):
            confidence_map(np.zeros((3, 3, 2)), 2)

    def test_range_checked(self) -> None:
        """Test values outside [0, 1] are rejected."""
        with pytest.raises(ValidationError):
            ConfidenceMap(W=np.full((2, 2), 1.5))


class TestResample:
    """Tests for resample_nearest()."""

    def test_downsample_uses_centres(self) -> None:
        """Test halving picks the odd rows and columns."""
        array = np.arange(64).reshape(8, 8)
        out = resample_nearest(array, (4, 4))
        np.testing.assert_array_equal(out, array[1::2, 1::2])

    def test_upsample_repeats(self) -> None:
        """Test doubling repeats every cell."""
        array = np.array([[1, 2], [3, 4]])
        out = resample_nearest(array, (4, 4))
        np.testing.assert_array_equal(out, np.kron(array, np.ones((2, 2), dtype=int)))


class TestSelectTopK:
    """Tests for select_topk()."""

    def test_oracle(self, rng: np.random.Generator) -> None:
        """Test the selection equals the k largest confidences inside Y."""
        E = rng.normal(size=(6, 6, 4))
        W = rng.random((6, 6))
        Y = rng.random((6, 6)) > 0.5
        sel = select_topk(E, W, Y, k=5)
        expected = sorted(W[Y].tolist(), reverse=True)[:5]
        np.testing.assert_allclose(sel.weights, expected)
        for emb, weight, (r, c) in sel.entries:
            assert Y[r, c]
            assert W[r, c] == weight
            np.testing.assert_allclose(emb, E[r, c])

    def test_ties_row_major(self) -> None:
        """Test equal confidences keep row-major order."""
        E = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
        W = np.full((2, 3), 0.5)
        Y = np.ones((2, 3), dtype=bool)
        sel = select_topk(E, W, Y, k=3)
        assert sel.locations.tolist() == [[0, 0], [0, 1], [0, 2]]

    def test_fewer_than_k(self) -> None:
        """Test all annotated pixels are returned when fewer than k exist."""
        Y = np.zeros((4, 4), dtype=bool)
        Y[1, 2] = Y[3, 0] = True
        sel = select_topk(np.ones((4, 4, 3)), np.full((4, 4), 0.3), Y, k=10)
        assert len(sel) == 2
        assert sel.k_requested == 10

    def test_annotation_resampled_to_grid(self) -> None:
        """Test Y at image resolution is sampled onto the embedding grid."""
        Y = np.zeros((8, 8), dtype=bool)
        Y[2:4, 2:4] = True
        W = np.zeros((8, 8))
        W[3, 3] = 0.9
        sel = select_topk(np.ones((4, 4, 2)), W, Y, k=1)
        assert sel.locations.tolist() == [[1, 1]]
        assert sel.weights[0] == pytest.approx(0.9)

    def test_empty_annotation(self) -> None:
        """Test an empty Y raises."""
        with pytest.raises(EmptyAnnotationError, match="podocyte"):
            select_topk(np.ones((4, 4, 2)), np.zeros((4, 4)), np.zeros((4, 4)), 3, "podocyte")

    def test_k_positive(self) -> None:
        """Test k must be at least one."""
        with pytest.raises(ValidationError):
            select_topk(np.ones((4, 4, 2)), np.zeros((4, 4)), np.ones((4, 4)), 0)

    @settings(max_examples=30, deadline=None)
    @given(W=hnp.arrays(np.float64, (5, 5), elements=PERCENT))
    def test_invariant_to_monotone_transform(self, W: np.ndarray) -> None:
        """Test a strictly increasing transform of W selects the same locations."""
        E = np.random.default_rng(0).normal(size=(5, 5, 3))
        Y = np.ones((5, 5), dtype=bool)
        a = select_topk(E, W, Y, 4)
        b = select_topk(E, np.sqrt(W), Y, 4)
        np.testing.assert_array_equal(a.locations, b.locations)


class TestSimilarityMap:
    """Tests for similarity_map()."""

    def test_cosine_to_single_reference(self) -> None:
        """Test a 45 degree embedding scores 1/sqrt(2)."""
        E = np.array([[[1.0, 1.0], [1.0, 0.0], [-1.0, 0.0]]])
        S = similarity_map(E, _selection([3.0, 0.0])).S
        np.testing.assert_allclose(S, [[1 / math.sqrt(2), 1.0, -1.0]])

    def test_scaling_invariant(self, rng: np.random.Generator) -> None:
        """Test positive rescaling of embeddings leaves S unchanged."""
        E = rng.normal(size=(4, 4, 5))
        sel = select_topk(E, rng.random((4, 4)), np.ones((4, 4)), 3)
        a = similarity_map(E, sel).S
        b = similarity_map(7.5 * E, sel).S
        np.testing.assert_allclose(a, b)

    def test_bounded(self, rng: np.random.Generator) -> None:
        """Test S lies in [-1, 1]."""
        E = rng.normal(size=(6, 6, 8))
        sel = select_topk(E, rng.random((6, 6)), np.ones((6, 6)), 6)
        S = similarity_map(E, sel).S
        assert S.min() >= -1.0
        assert S.max() <= 1.0

    def test_zero_norm_scores_zero(self) -> None:
        """Test zero embeddings score 0."""
        E = np.zeros((1, 2, 2))
        E[0, 1] = [0.0, 2.0]
        S = similarity_map(E, _selection([0.0, 1.0])).S
        np.testing.assert_allclose(S, [[0.0, 1.0]])

    def test_aggregations_differ(self) -> None:
        """Test mean of cosines against cosine to the mean embedding."""
        E = np.array([[[1.0, 0.0]]])
        sel = _selection([1.0, 0.0], [0.0, 1.0])
        mean_cos = similarity_map(E, sel, aggregation=Aggregation.MEAN_COSINE).S
        mean_emb = similarity_map(E, sel, aggregation="mean_embedding").S
        assert mean_cos[0, 0] == pytest.approx(0.5)
        assert mean_emb[0, 0] == pytest.approx(1 / math.sqrt(2))

    def test_resized_to_output(self) -> None:
        """Test bilinear resizing to image resolution keeps a constant map constant."""
        E = np.ones((4, 4, 3))
        S = similarity_map(E, _selection([1.0, 1.0, 1.0]), out_shape=(16, 16)).S
        assert S.shape == (16, 16)
        np.testing.assert_allclose(S, 1.0)

    def test_empty_selection(self) -> None:
        """Test an empty selection raises."""
        empty = TopKSelection(
            embeddings=np.zeros((0, 2)),
            weights=np.zeros(0),
            locations=np.zeros((0, 2), dtype=np.int64),
            k_requested=3,
        )
        with pytest.raises(EmptySelectionError):
            similarity_map(np.ones((2, 2, 2)), empty)


class TestWeightMaps:
    """Tests for weight_maps()."""

    def test_values(self) -> None:
        """Test exp(W) and S inside Y, the floor outside."""
        W = np.array([[0.0, 0.5], [1.0, 0.2]])
        S = np.array([[0.9, 0.4], [-0.3, 0.7]])
        Y = np.array([[1, 1], [1, 0]])
        wm = weight_maps(W, S, Y, eps_floor=0.05)
        np.testing.assert_allclose(wm.omega_w, [[1.0, math.exp(0.5)], [math.e, 0.05]])
        np.testing.assert_allclose(wm.omega_s, [[0.9, 0.4], [-0.3, 0.05]])
        np.testing.assert_allclose(wm.omega, wm.omega_w * wm.omega_s)
        assert wm.omega[1, 1] == pytest.approx(0.0025)

    def test_zero_floor_zeroes_background(self) -> None:
        """Test eps_floor 0 restricts the weights to the annotation."""
        Y = np.zeros((3, 3))
        Y[1, 1] = 1
        wm = weight_maps(np.full((3, 3), 0.5), np.full((3, 3), 0.8), Y, eps_floor=0.0)
        assert np.count_nonzero(wm.omega) == 1

    def test_shape_mismatch(self) -> None:
        """Test misaligned maps raise."""
        with pytest.raises(ValidationError, match="shape"):
            weight_maps(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))

    def test_negative_floor(self) -> None:
        """Test a negative floor raises."""
        with pytest.raises(ValidationError):
            weight_maps(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), eps_floor=-0.1)
