"""
Corrective-learning maps.

confidence_map -> select_topk -> similarity_map -> weight_maps, all on numpy arrays.
Y and W are brought to the embedding grid by nearest-neighbour sampling; the
similarity map goes back to image resolution bilinearly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from skimage import transform

from mocl_seg.core.errors import EmptyAnnotationError, EmptySelectionError, ValidationError


class Aggregation(Enum):
    """How the k reference embeddings are reduced."""

    MEAN_COSINE = "mean_cosine"  # mean of pairwise cosines
    MEAN_EMBEDDING = "mean_embedding"  # cosine to the mean embedding


@dataclass(frozen=True)
class ConfidenceMap:
    W: np.ndarray

    def __post_init__(self) -> None:
        if self.W.size and (self.W.min() < 0.0 or self.W.max() > 1.0):
            raise ValidationError("confidence values outside [0, 1]")


@dataclass(frozen=True)
class TopKSelection:
    embeddings: np.ndarray  # (n, M)
    weights: np.ndarray  # (n,), descending
    locations: np.ndarray  # (n, 2) row, col on the embedding grid
    k_requested: int
    class_name: str = ""

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    @property
    def entries(self) -> list[tuple[np.ndarray, float, tuple[int, int]]]:
        return [
            (self.embeddings[i], float(self.weights[i]), (int(r), int(c)))
            for i, (r, c) in enumerate(self.locations)
        ]


@dataclass(frozen=True)
class SimilarityMap:
    S: np.ndarray


@dataclass(frozen=True)
class WeightMaps:
    omega_w: np.ndarray
    omega_s: np.ndarray
    eps_floor: float = 0.0
    stats: dict[str, float] = field(default_factory=dict)

    @property
    def omega(self) -> np.ndarray:
        return self.omega_w * self.omega_s


def confidence_map(prob: np.ndarray, class_index: int) -> ConfidenceMap:
    """
    The class's foreground-probability channel of an H x W x C map.

    Raises:
        ValidationError: class_index outside [0, C)
    """
    if prob.ndim != 3:
        raise ValidationError(f"expected H x W x C probabilities, got shape {prob.shape}")
    if not 0 <= class_index < prob.shape[2]:
        raise ValidationError(f"class index {class_index} outside [0, {prob.shape[2]})")
    return ConfidenceMap(W=np.asarray(prob[..., class_index], dtype=np.float64))


def resample_nearest(array: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resampling of a 2-D array onto a target grid (pixel centers)."""
    if array.shape == shape:
        return array
    h, w = array.shape
    rows = np.minimum(((np.arange(shape[0]) + 0.5) * h / shape[0]).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(shape[1]) + 0.5) * w / shape[1]).astype(np.int64), w - 1)
    return array[np.ix_(rows, cols)]


def select_topk(
    E: np.ndarray,
    W: ConfidenceMap | np.ndarray,
    Y: np.ndarray,
    k: int,
    class_name: str = "",
) -> TopKSelection:
    """
    The k highest-confidence embeddings among annotated pixels.

    Ties in W are broken by row-major position. With fewer than k annotated pixels all
    of them are returned.

    Raises:
        ValidationError: k < 1
        EmptyAnnotationError: Y has no annotated pixel on the embedding grid
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    conf = W.W if isinstance(W, ConfidenceMap) else np.asarray(W, dtype=np.float64)
    grid = E.shape[:2]
    y_grid = resample_nearest(np.asarray(Y), grid) > 0
    w_grid = resample_nearest(conf, grid)

    candidates = np.flatnonzero(y_grid.ravel())
    if candidates.size == 0:
        raise EmptyAnnotationError(
            f"no annotated pixels for class '{class_name}'", context={"class": class_name}
        )
    scores = w_grid.ravel()[candidates]
    order = np.argsort(-scores, kind="stable")[:k]
    chosen = candidates[order]
    rows, cols = np.divmod(chosen, grid[1])
    flat_e = E.reshape(-1, E.shape[2])
    return TopKSelection(
        embeddings=np.asarray(flat_e[chosen], dtype=np.float64),
        weights=scores[order],
        locations=np.stack([rows, cols], axis=1),
        k_requested=k,
        class_name=class_name,
    )


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)


def similarity_map(
    E: np.ndarray,
    sel: TopKSelection,
    out_shape: tuple[int, int] | None = None,
    aggregation: Aggregation | str = Aggregation.MEAN_COSINE,
) -> SimilarityMap:
    """
    Cosine similarity of every embedding to the selected references, in [-1, 1].

    Zero-norm embeddings score 0. With out_shape the map is bilinearly resized to it.

    Raises:
        EmptySelectionError: the selection holds no embeddings
    """
    if len(sel) == 0:
        raise EmptySelectionError(f"empty top-k selection for class '{sel.class_name}'")
    aggregation = Aggregation(aggregation)
    e_unit = _unit_rows(np.asarray(E, dtype=np.float64))
    if aggregation is Aggregation.MEAN_COSINE:
        reference = _unit_rows(sel.embeddings).mean(axis=0)
    else:
        reference = _unit_rows(sel.embeddings.mean(axis=0, keepdims=True))[0]
    S = np.clip(e_unit @ reference, -1.0, 1.0)

    if out_shape is not None and S.shape != tuple(out_shape):
        S = transform.resize(
            S, out_shape, order=1, mode="edge", anti_aliasing=False, preserve_range=True
        )
    return SimilarityMap(S=S)


def weight_maps(
    W: ConfidenceMap | np.ndarray,
    S: SimilarityMap | np.ndarray,
    Y: np.ndarray,
    eps_floor: float = 0.05,
) -> WeightMaps:
    """
    omega_w = exp(W) * Y and omega_s = S * Y, with eps_floor written where Y = 0.

    Raises:
        ValidationError: shape mismatch or negative eps_floor
    """
    conf = W.W if isinstance(W, ConfidenceMap) else np.asarray(W, dtype=np.float64)
    sim = S.S if isinstance(S, SimilarityMap) else np.asarray(S, dtype=np.float64)
    annotated = np.asarray(Y) > 0
    if not conf.shape == sim.shape == annotated.shape:
        raise ValidationError(f"shape mismatch: W {conf.shape}, S {sim.shape}, Y {annotated.shape}")
    if eps_floor < 0:
        raise ValidationError(f"eps_floor must be >= 0, got {eps_floor}")

    omega_w = np.where(annotated, np.exp(conf), eps_floor)
    omega_s = np.where(annotated, sim, eps_floor)
    return WeightMaps(omega_w=omega_w, omega_s=omega_s, eps_floor=eps_floor)
