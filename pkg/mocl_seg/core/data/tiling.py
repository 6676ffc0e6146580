"""
Square tiling of large images with edge-anchored last row/column.
"""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from mocl_seg.core.data.models import TileCoord
from mocl_seg.core.errors import TilingError


def compute_starts(length: int, tile: int, stride: int) -> list[int]:
    """Tile offsets along one axis; the last tile is anchored to the edge."""
    starts = list(range(0, length - tile + 1, stride))
    if starts[-1] + tile < length:
        starts.append(length - tile)
    return starts


def tile_image(image: np.ndarray, tile: int, stride: int | None = None) -> list[TileCoord]:
    """Tile coordinates covering an H x W (x C) image, row-major."""
    return tile_grid(int(image.shape[0]), int(image.shape[1]), tile, stride)


def tile_grid(h: int, w: int, tile: int, stride: int | None = None) -> list[TileCoord]:
    """
    Tile coordinates covering an h x w grid, row-major.

    Raises:
        TilingError: tile larger than the grid, or non-positive tile/stride
    """
    stride = tile if stride is None else stride
    if tile <= 0 or stride <= 0:
        raise TilingError(f"tile and stride must be positive, got {tile}/{stride}")
    if tile > min(h, w):
        raise TilingError(f"tile {tile} larger than image {h}x{w}")

    return [
        TileCoord(y=y, x=x, size=tile)
        for y in compute_starts(h, tile, stride)
        for x in compute_starts(w, tile, stride)
    ]


def crop(array: np.ndarray, tile: TileCoord) -> np.ndarray:
    ys, xs = tile.slices()
    return array[ys, xs]


def stitch_average(
    pieces: Iterable[tuple[TileCoord, np.ndarray]], height: int, width: int, scale: int = 1
) -> np.ndarray:
    """
    Average overlapping per-tile outputs (H x W x C) back into one map.

    `scale` is the downsampling factor of the pieces relative to the tile grid.
    """
    total: np.ndarray | None = None
    count: np.ndarray | None = None
    for tile, piece in pieces:
        if total is None:
            channels = piece.shape[2:]
            total = np.zeros((height // scale, width // scale, *channels), dtype=np.float64)
            count = np.zeros((height // scale, width // scale), dtype=np.float64)
        y, x = tile.y // scale, tile.x // scale
        ph = min(piece.shape[0], total.shape[0] - y)
        pw = min(piece.shape[1], total.shape[1] - x)
        total[y : y + ph, x : x + pw] += piece[:ph, :pw]
        count[y : y + ph, x : x + pw] += 1  # type: ignore[index]
    if total is None or count is None:
        raise TilingError("nothing to stitch")
    if (count == 0).any():
        raise TilingError("tiles do not cover the output")
    return total / count.reshape(count.shape + (1,) * (total.ndim - 2))
