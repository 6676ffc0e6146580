"""Tests for tiling and stitching."""

import numpy as np
import pytest

from mocl_seg.core.data import tile_image
from mocl_seg.core.data.models import TileCoord
from mocl_seg.core.data.tiling import compute_starts, crop, stitch_average, tile_grid
from mocl_seg.core.errors import TilingError


class TestTileGrid:
    """Tests for tile_grid() and tile_image()."""

    def test_exact_fit(self) -> None:
        """Test a grid divisible by the tile gives non-overlapping tiles."""
        tiles = tile_grid(64, 64, 32)
        assert [(t.y, t.x) for t in tiles] == [(0, 0), (0, 32), (32, 0), (32, 32)]

    def test_last_tile_anchored(self) -> None:
        """Test the last row/column ends at the image edge."""
        assert compute_starts(70, 32, 32) == [0, 32, 38]

    def test_overlapping_stride(self) -> None:
        """Test a stride smaller than the tile overlaps tiles."""
        assert compute_starts(64, 32, 16) == [0, 16, 32]

    def test_covers_image(self) -> None:
        """Test every pixel is covered at least once."""
        covered = np.zeros((50, 70), dtype=bool)
        for tile in tile_grid(50, 70, 24):
            ys, xs = tile.slices()
            covered[ys, xs] = True
        assert covered.all()

    def test_tile_image_uses_spatial_shape(self) -> None:
        """Test tile_image ignores the channel axis."""
        tiles = tile_image(np.zeros((40, 40, 3), np.uint8), 40)
        assert tiles == [TileCoord(y=0, x=0, size=40)]

    def test_tile_too_large(self) -> None:
        """Test a tile larger than the image is rejected."""
        with pytest.raises(TilingError):
            tile_grid(16, 64, 32)

    @pytest.mark.parametrize(("tile", "stride"), [(0, None), (8, 0), (8, -4)])
    def test_non_positive(self, tile: int, stride: int | None) -> None:
        """Test non-positive tile or stride is rejected."""
        with pytest.raises(TilingError):
            tile_grid(32, 32, tile, stride)


class TestStitch:
    """Tests for crop() and stitch_average()."""

    def test_crop_then_stitch_restores(self) -> None:
        """Test cropping tiles and stitching them back gives the original map."""
        rng = np.random.default_rng(0)
        image = rng.random((48, 48, 2))
        tiles = tile_grid(48, 48, 32, 16)
        stitched = stitch_average(((t, crop(image, t)) for t in tiles), 48, 48)
        np.testing.assert_allclose(stitched, image)

    def test_overlap_averaged(self) -> None:
        """Test overlapping pixels hold the mean of the pieces."""
        a = (TileCoord(y=0, x=0, size=4), np.zeros((4, 4, 1)))
        b = (TileCoord(y=0, x=2, size=4), np.ones((4, 4, 1)))
        out = stitch_average([a, b], 4, 6)
        assert out[0, 0, 0] == 0.0
        assert out[0, 3, 0] == 0.5
        assert out[0, 5, 0] == 1.0

    def test_downscaled_pieces(self) -> None:
        """Test pieces at half resolution land on the scaled grid."""
        pieces = [(t, np.full((2, 2, 1), float(i))) for i, t in enumerate(tile_grid(8, 8, 4))]
        out = stitch_average(pieces, 8, 8, scale=2)
        assert out.shape == (4, 4, 1)
        assert out[3, 3, 0] == 3.0

    def test_gaps_rejected(self) -> None:
        """Test incomplete coverage raises."""
        with pytest.raises(TilingError, match="cover"):
            stitch_average([(TileCoord(y=0, x=0, size=2), np.ones((2, 2, 1)))], 4, 4)

    def test_nothing_to_stitch(self) -> None:
        """Test an empty iterable raises."""
        with pytest.raises(TilingError):
            stitch_average([], 4, 4)
