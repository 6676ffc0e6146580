"""
mocl-seg: weak-box nuclei segmentation with adapter fine-tuning and corrective refinement.

A library and CLI that turns box annotations into pixel masks, fine-tunes a frozen
transformer backbone through adapters, refines it with a confidence/similarity weighted
loss, and scores the result with pixel and instance metrics.

Usage:
    from mocl_seg.core.data import load_manifest
    manifest = load_manifest("data", "data/manifest.json")
"""

__version__ = "0.1.0"
__all__ = ["__version__"]
