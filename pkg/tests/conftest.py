"""
Pytest configuration and fixtures for mocl-seg tests.

Provides fixtures for:
- Small synthetic datasets written with the generator
- A tiny model configuration that trains in seconds on CPU
- Hand-made masks and instance maps
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from skimage import draw

from mocl_seg.core.data import generate_synthetic_dataset, load_manifest
from mocl_seg.core.data.models import DatasetManifest
from mocl_seg.core.model.config import AdapterConfig, EncoderConfig, Hyperparams, ModelConfig

# =============================================================================
# Synthetic Dataset Fixtures
# =============================================================================

SMALL_SIZE = 64
SMALL_PATCHES = 12


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A 12-patch, 64 px, two-class synthetic dataset (shared, treat as read-only)."""
    root = tmp_path_factory.mktemp("synthetic")
    generate_synthetic_dataset(root, SMALL_PATCHES, seed=7, image_size=SMALL_SIZE)
    return root


@pytest.fixture(scope="session")
def synthetic_manifest(synthetic_root: Path) -> DatasetManifest:
    return load_manifest(synthetic_root)


@pytest.fixture
def fresh_dataset(tmp_path: Path) -> DatasetManifest:
    """A private 6-patch dataset tests may modify."""
    return generate_synthetic_dataset(tmp_path / "data", 6, seed=3, image_size=SMALL_SIZE)


# =============================================================================
# Model Fixtures
# =============================================================================


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(
        encoder=EncoderConfig(patch_size=8, embed_dim=32, depth=2, num_heads=2, input_size=64),
        adapter=AdapterConfig(bottleneck_dim=8),
        embed_channels=16,
        decoder_channels=16,
    )


@pytest.fixture
def quick_hyperparams() -> Hyperparams:
    return Hyperparams(batch_size=4, learning_rate=1e-3, epochs=2, patience=5, seed=0)


# =============================================================================
# Array Fixtures
# =============================================================================


def disk_instances(
    shape: tuple[int, int], centers: list[tuple[int, int]], radius: int
) -> np.ndarray:
    """Instance map with one disk per center, labels 1..n in list order."""
    labels = np.zeros(shape, dtype=np.int32)
    for label, (r, c) in enumerate(centers, start=1):
        rr, cc = draw.disk((r, c), radius, shape=shape)
        labels[rr, cc] = label
    return labels


@pytest.fixture
def two_disks() -> np.ndarray:
    """32x32 instance map with two separated disks of radius 5."""
    return disk_instances((32, 32), [(8, 8), (22, 22)], 5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


# =============================================================================
# Pipeline Fixtures
# =============================================================================

TINY_OVERRIDES = [
    "model.encoder.patch_size=8",
    "model.encoder.embed_dim=32",
    "model.encoder.depth=2",
    "model.encoder.num_heads=2",
    "model.encoder.input_size=64",
    "model.adapter.bottleneck_dim=8",
    "model.embed_channels=16",
    "model.decoder_channels=16",
    "train.epochs=1",
    "mocl.k=8",
    "mocl.hyperparams.epochs=1",
    "seeds=[0]",
]


@pytest.fixture
def tiny_overrides(synthetic_root: Path, tmp_path: Path) -> list[str]:
    """Overrides that point the defaults at the shared dataset and shrink the model."""
    return [
        *TINY_OVERRIDES,
        f"data.root={synthetic_root}",
        f"output_dir={tmp_path / 'run'}",
    ]
