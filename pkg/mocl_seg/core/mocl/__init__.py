"""
Corrective learning: confidence/similarity weighted loss and the refinement stage.
"""

from mocl_seg.core.mocl.loss import mocl_loss
from mocl_seg.core.mocl.maps import (
    Aggregation,
    ConfidenceMap,
    SimilarityMap,
    TopKSelection,
    WeightMaps,
    confidence_map,
    select_topk,
    similarity_map,
    weight_maps,
)
from mocl_seg.core.mocl.refine import MoclObjective, refine

__all__ = [
    "Aggregation",
    "ConfidenceMap",
    "MoclObjective",
    "SimilarityMap",
    "TopKSelection",
    "WeightMaps",
    "confidence_map",
    "mocl_loss",
    "refine",
    "select_topk",
    "similarity_map",
    "weight_maps",
]
