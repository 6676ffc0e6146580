"""
mocl-seg core library.

This package contains the core functionality:
- data: manifests, splits, masks, boxes, tiling and the synthetic generator
- annotate: box prompts to pixel masks
- model: frozen backbone with adapters, training and inference
- mocl: confidence/similarity weighted corrective refinement
- metrics: pixel and instance metrics, Wilcoxon comparisons
- pipeline: experiment configs, staged runs, matrices and reports
"""

__all__: list[str] = []
