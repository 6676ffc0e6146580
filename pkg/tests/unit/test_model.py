"""Tests for the adapter network, checkpoints, training and inference."""

from pathlib import Path

import numpy as np
import pytest
import torch
from torch import Tensor

from mocl_seg.core.data import generate_synthetic_dataset, load_sample, stack_masks
from mocl_seg.core.data.models import DatasetManifest, TileCoord
from mocl_seg.core.errors import CheckpointError, ModelConfigError, ShapeError, TrainingError
from mocl_seg.core.metrics import dice
from mocl_seg.core.model import (
    AdapterConfig,
    EncoderConfig,
    Hyperparams,
    ModelConfig,
    ModelState,
    SegmentationDataset,
    build_model,
    extract_texture_features,
    load_pretrained_backbone,
    predict,
    save_backbone,
    train_adapter,
    validate_model_config,
)
from mocl_seg.core.model.dataset import parse_unit
from mocl_seg.core.model.losses import dice_bce_loss
from mocl_seg.core.model.training import hard_dice


def _state(config: ModelConfig, classes: list[str], seed: int = 0) -> ModelState:
    return build_model(
        config.encoder,
        config.adapter,
        len(classes),
        config=config,
        class_names=classes,
        seed=seed,
    )


def _dataset(
    manifest: DatasetManifest,
    ids: list[str],
    config: ModelConfig,
    tile_size: int | None = None,
) -> SegmentationDataset:
    def targets(sample_id: str) -> np.ndarray:
        return stack_masks(load_sample(manifest, sample_id), manifest.classes)

    return SegmentationDataset(
        manifest,
        ids,
        manifest.classes,
        config.encoder.input_size,
        config.adapter.texture_sigma,
        targets,
        tile_size=tile_size,
    )


class TestModelConfig:
    """Tests for validate_model_config()."""

    def test_defaults_valid(self) -> None:
        """Test the default configuration passes."""
        validate_model_config(EncoderConfig(), AdapterConfig())

    @pytest.mark.parametrize(
        ("encoder", "adapter", "message"),
        [
            (EncoderConfig(input_size=100, patch_size=8), AdapterConfig(), "divisible"),
            (EncoderConfig(input_size=48, patch_size=6), AdapterConfig(), "power of two"),
            (EncoderConfig(embed_dim=30, num_heads=4), AdapterConfig(), "num_heads"),
            (EncoderConfig(embed_dim=16), AdapterConfig(bottleneck_dim=16), "bottleneck"),
            (EncoderConfig(depth=2), AdapterConfig(inject_blocks=[2]), "inject_blocks"),
        ],
    )
    def test_invalid(self, encoder: EncoderConfig, adapter: AdapterConfig, message: str) -> None:
        """Test each cross-field constraint."""
        with pytest.raises(ModelConfigError, match=message):
            validate_model_config(encoder, adapter)

    def test_default_inject_blocks(self) -> None:
        """Test adapters default to the last half of the blocks."""
        assert AdapterConfig().resolved_blocks(4) == [2, 3]
        assert AdapterConfig(inject_blocks=[3, 0, 3]).resolved_blocks(4) == [0, 3]


class TestTexture:
    """Tests for extract_texture_features()."""

    def test_standardized(self, rng: np.random.Generator) -> None:
        """Test the texture map has zero mean and unit variance."""
        image = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
        texture = extract_texture_features(image)
        assert texture.shape == (32, 32, 1)
        assert texture.mean() == pytest.approx(0.0, abs=1e-9)
        assert texture.std() == pytest.approx(1.0)

    def test_constant_image(self) -> None:
        """Test a flat image has an all-zero texture."""
        assert not extract_texture_features(np.full((16, 16, 3), 128, np.uint8)).any()

    def test_bad_sigma(self) -> None:
        """Test sigma must be positive."""
        with pytest.raises(ModelConfigError, match="sigma") as exc_info:
            extract_texture_features(np.zeros((8, 8, 3), np.uint8), sigma=0.0)
        assert exc_info.value.code == "MSEG-MODEL-001"


class TestNetwork:
    """Tests for AdapterSegmenter and ModelState."""

    def test_output_shapes(self, tiny_model_config: ModelConfig) -> None:
        """Test logits at input resolution and embeddings at half resolution."""
        state = _state(tiny_model_config, ["a", "b"])
        logits, embeddings = state.network(torch.rand(2, 3, 64, 64), torch.randn(2, 1, 64, 64))
        assert logits.shape == (2, 2, 64, 64)
        assert embeddings.shape == (2, 16, 32, 32)

    def test_adapters_start_as_identity(self, tiny_model_config: ModelConfig) -> None:
        """Test a fresh network matches its adapter-free backbone."""
        state = _state(tiny_model_config, ["a"])
        state.network.eval()
        image, texture = torch.rand(1, 3, 64, 64), torch.randn(1, 1, 64, 64)
        with torch.no_grad():
            adapted = state.network.encode(image, texture, use_adapters=True)
            plain = state.network.encode(image, texture, use_adapters=False)
        torch.testing.assert_close(adapted, plain)

    def test_backbone_frozen(self, tiny_model_config: ModelConfig) -> None:
        """Test only adapters, texture projections and decoder are trainable."""
        state = _state(tiny_model_config, ["a"])
        assert all(not p.requires_grad for p in state.backbone_parameters().values())
        trainable = state.trainable_parameters()
        assert any(name.startswith("adapters.") for name in trainable)
        assert any(name.startswith("texture_proj.") for name in trainable)
        assert "class_head.weight" in trainable
        assert not any(name.startswith("blocks.") for name in trainable)

    def test_seeded_build(self, tiny_model_config: ModelConfig) -> None:
        """Test the same seed builds the same backbone."""
        a = _state(tiny_model_config, ["a"], seed=3)
        b = _state(tiny_model_config, ["a"], seed=3)
        assert a.backbone_hash() == b.backbone_hash()

    def test_class_name_count(self, tiny_model_config: ModelConfig) -> None:
        """Test class names must match the class count."""
        with pytest.raises(CheckpointError):
            build_model(
                tiny_model_config.encoder, tiny_model_config.adapter, 2, class_names=["a"]
            )


class TestCheckpoints:
    """Tests for save/load and backbone swapping."""

    def test_save_load(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test a reloaded model predicts identically."""
        state = _state(tiny_model_config, ["podocyte", "mesangial"])
        state.save(tmp_path / "ckpt")
        loaded = ModelState.load(tmp_path / "ckpt")
        assert loaded.class_names == ["podocyte", "mesangial"]
        assert loaded.config == state.config
        image = np.random.default_rng(0).integers(0, 256, (64, 64, 3)).astype(np.uint8)
        np.testing.assert_allclose(predict(loaded, image).prob, predict(state, image).prob)

    def test_load_missing(self, tmp_path: Path) -> None:
        """Test an empty directory is not a checkpoint."""
        with pytest.raises(CheckpointError):
            ModelState.load(tmp_path)

    def test_pretrained_backbone(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test backbone weights are replaced and stay frozen."""
        donor = _state(tiny_model_config, ["a"], seed=1)
        path = save_backbone(donor, tmp_path / "backbone.pt")
        state = _state(tiny_model_config, ["a"], seed=2)
        assert state.backbone_hash() != donor.backbone_hash()
        load_pretrained_backbone(state, path)
        assert state.backbone_hash() == donor.backbone_hash()
        assert all(not p.requires_grad for p in state.backbone_parameters().values())

    def test_pretrained_mismatch(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test a backbone of another shape is rejected with the tensors named."""
        wider = tiny_model_config.model_copy(
            update={"encoder": tiny_model_config.encoder.model_copy(update={"embed_dim": 64})}
        )
        path = save_backbone(_state(wider, ["a"]), tmp_path / "backbone.pt")
        with pytest.raises(CheckpointError, match="pos_embed") as exc_info:
            load_pretrained_backbone(_state(tiny_model_config, ["a"]), path)
        assert "tensors" in exc_info.value.context

    def test_pretrained_missing_file(self, tmp_path: Path, tiny_model_config: ModelConfig) -> None:
        """Test a missing backbone file raises."""
        with pytest.raises(CheckpointError, match="not found"):
            load_pretrained_backbone(_state(tiny_model_config, ["a"]), tmp_path / "none.pt")


class TestDataset:
    """Tests for SegmentationDataset."""

    def test_item_layout(
        self, synthetic_manifest: DatasetManifest, tiny_model_config: ModelConfig
    ) -> None:
        """Test items hold image, texture and target at input size."""
        data = _dataset(synthetic_manifest, ["p0000", "p0001"], tiny_model_config)
        item = data[1]
        assert len(data) == 2
        assert item["image"].shape == (3, 64, 64)
        assert item["texture"].shape == (1, 64, 64)
        assert item["target"].shape == (2, 64, 64)
        assert set(torch.unique(item["target"]).tolist()) <= {0.0, 1.0}

    def test_small_tile_padded_at_native_scale(
        self, synthetic_manifest: DatasetManifest, tiny_model_config: ModelConfig
    ) -> None:
        """Test a 32 px tile keeps its pixels and is padded to the 64 px input."""
        data = _dataset(synthetic_manifest, ["p0000@32_0"], tiny_model_config, tile_size=32)
        masks = stack_masks(load_sample(synthetic_manifest, "p0000"), synthetic_manifest.classes)
        assert len(data) == 1
        item = data[0]
        assert item["image"].shape == (3, 64, 64)
        np.testing.assert_array_equal(item["target"][:, :32, :32].numpy(), masks[:, 32:, :32])
        assert not item["target"][:, 32:, :].any()
        assert not item["target"][:, :, 32:].any()
        assert torch.all(item["image"][:, 32:, :] == 1.0)

    def test_large_image_windows_match_predict(
        self, tmp_path: Path, tiny_model_config: ModelConfig
    ) -> None:
        """Test a 96 px image yields the four 64 px windows predict() uses, unscaled."""
        manifest = generate_synthetic_dataset(tmp_path / "data", 2, seed=5, image_size=96)
        data = _dataset(manifest, [manifest.ids[0]], tiny_model_config)
        assert [(w.tile.y, w.tile.x) for w in data.windows] == [
            (0, 0),
            (0, 32),
            (32, 0),
            (32, 32),
        ]
        masks = stack_masks(load_sample(manifest, manifest.ids[0]), manifest.classes)
        for index, window in enumerate(data.windows):
            ys, xs = window.tile.slices()
            np.testing.assert_array_equal(data[index]["target"].numpy(), masks[:, ys, xs])

    def test_parse_unit(self) -> None:
        """Test patch ids split into sample and tile."""
        assert parse_unit("p0001", None) == ("p0001", None)
        assert parse_unit("p0001@16_32", 16) == ("p0001", TileCoord(y=16, x=32, size=16))
        with pytest.raises(ShapeError):
            parse_unit("p0001@16_32", None)


class TestTraining:
    """Tests for train_adapter()."""

    def test_backbone_unchanged_adapters_move(
        self,
        synthetic_manifest: DatasetManifest,
        tiny_model_config: ModelConfig,
        quick_hyperparams: Hyperparams,
    ) -> None:
        """Test training updates adapters/decoder and never the backbone."""
        state = _state(tiny_model_config, synthetic_manifest.classes)
        before_hash = state.backbone_hash()
        before_head = state.network.class_head.weight.detach().clone()
        data = _dataset(synthetic_manifest, synthetic_manifest.ids[:4], tiny_model_config)
        hp = quick_hyperparams.model_copy(update={"epochs": 1})
        state, history = train_adapter(state, data, None, hp)
        assert state.backbone_hash() == before_hash
        assert not torch.equal(state.network.class_head.weight, before_head)
        assert history.selection_split == "train"
        assert len(history.epochs) == 1
        assert history.epochs[0].train_loss is not None

    def test_validation_tracks_best(
        self,
        synthetic_manifest: DatasetManifest,
        tiny_model_config: ModelConfig,
        quick_hyperparams: Hyperparams,
    ) -> None:
        """Test best_val_dice is the maximum over recorded epochs."""
        state = _state(tiny_model_config, synthetic_manifest.classes)
        train = _dataset(synthetic_manifest, synthetic_manifest.ids[:4], tiny_model_config)
        val = _dataset(synthetic_manifest, synthetic_manifest.ids[4:6], tiny_model_config)
        _, history = train_adapter(state, train, val, quick_hyperparams, include_initial=True)
        assert history.epochs[0].epoch == 0
        assert history.selection_split == "val"
        assert history.best_val_dice == max(e.val_dice for e in history.epochs)

    def test_early_stopping(
        self, synthetic_manifest: DatasetManifest, tiny_model_config: ModelConfig
    ) -> None:
        """Test a loss without gradient signal stops after `patience` flat epochs."""
        state = _state(tiny_model_config, synthetic_manifest.classes)
        data = _dataset(synthetic_manifest, synthetic_manifest.ids[:2], tiny_model_config)
        hp = Hyperparams(batch_size=2, epochs=5, patience=1, seed=0)

        def flat(prob: Tensor, embeddings: Tensor, target: Tensor) -> Tensor:
            return prob.sum() * 0.0

        _, history = train_adapter(state, data, None, hp, flat)
        assert history.stopped_early
        assert len(history.epochs) == 2
        assert history.best_epoch == 1

    def test_non_finite_loss(
        self, synthetic_manifest: DatasetManifest, tiny_model_config: ModelConfig
    ) -> None:
        """Test a NaN loss raises with the epoch index."""
        state = _state(tiny_model_config, synthetic_manifest.classes)
        data = _dataset(synthetic_manifest, synthetic_manifest.ids[:2], tiny_model_config)

        def broken(prob: Tensor, embeddings: Tensor, target: Tensor) -> Tensor:
            return prob.sum() * float("nan")

        with pytest.raises(TrainingError) as exc_info:
            train_adapter(state, data, None, Hyperparams(epochs=2), broken)
        assert exc_info.value.context["epoch"] == 1

    def test_empty_training_set(
        self, synthetic_manifest: DatasetManifest, tiny_model_config: ModelConfig
    ) -> None:
        """Test an empty dataset raises."""
        state = _state(tiny_model_config, synthetic_manifest.classes)
        with pytest.raises(TrainingError, match="empty"):
            train_adapter(
                state, _dataset(synthetic_manifest, [], tiny_model_config), None, Hyperparams()
            )

    def test_every_trainable_parameter_gets_gradient(
        self,
        synthetic_manifest: DatasetManifest,
        tiny_model_config: ModelConfig,
        quick_hyperparams: Hyperparams,
    ) -> None:
        """Test the loss reaches every adapter, texture and decoder parameter."""
        state = _state(tiny_model_config, synthetic_manifest.classes)
        data = _dataset(synthetic_manifest, synthetic_manifest.ids[:4], tiny_model_config)
        # one epoch moves the zero-initialized up-projections
        hp = quick_hyperparams.model_copy(update={"epochs": 1})
        state, _ = train_adapter(state, data, None, hp)

        item = data[0]
        network = state.network
        network.train()
        network.zero_grad()
        logits, embeddings = network(item["image"][None], item["texture"][None])
        dice_bce_loss(torch.sigmoid(logits), embeddings, item["target"][None]).backward()
        silent = [
            name
            for name, param in state.trainable_parameters().items()
            if param.grad is None or not bool(param.grad.abs().sum() > 0)
        ]
        assert silent == []

    @pytest.mark.filterwarnings("error:Converting a tensor with requires_grad")
    def test_loss_accumulated_without_warning(
        self,
        synthetic_manifest: DatasetManifest,
        tiny_model_config: ModelConfig,
        quick_hyperparams: Hyperparams,
    ) -> None:
        """Test the epoch loss is read from a detached tensor."""
        state = _state(tiny_model_config, synthetic_manifest.classes)
        data = _dataset(synthetic_manifest, synthetic_manifest.ids[:2], tiny_model_config)
        hp = quick_hyperparams.model_copy(update={"epochs": 1})
        _, history = train_adapter(state, data, None, hp)
        assert history.epochs[0].train_loss is not None

    @pytest.mark.slow
    def test_overfits_single_sample(
        self, synthetic_manifest: DatasetManifest, tiny_model_config: ModelConfig
    ) -> None:
        """Test adapters and decoder fit one sample's masks to Dice >= 0.8 per class."""
        classes = synthetic_manifest.classes
        state = _state(tiny_model_config, classes)
        data = _dataset(synthetic_manifest, ["p0001"], tiny_model_config)
        hp = Hyperparams(batch_size=1, learning_rate=5e-3, epochs=300, patience=300, seed=0)
        state, _ = train_adapter(state, data, None, hp)

        sample = load_sample(synthetic_manifest, "p0001")
        prob = predict(state, sample.image).prob
        masks = stack_masks(sample, classes)
        scores = [dice(prob[..., c] >= 0.5, masks[c]) for c in range(len(classes))]
        assert min(scores) >= 0.8, scores

    def test_hard_dice(self) -> None:
        """Test per-map hard Dice with the empty-pair convention."""
        prob = torch.tensor([[[[0.9, 0.1], [0.6, 0.2]]], [[[0.1, 0.1], [0.1, 0.1]]]])
        target = torch.tensor([[[[1.0, 0.0], [0.0, 0.0]]], [[[0.0, 0.0], [0.0, 0.0]]]])
        torch.testing.assert_close(hard_dice(prob, target).flatten(), torch.tensor([2 / 3, 1.0]))


class TestPredict:
    """Tests for predict()."""

    def test_single_pass(self, tiny_model_config: ModelConfig) -> None:
        """Test an input-sized image gives full-size probabilities."""
        state = _state(tiny_model_config, ["a", "b"])
        output = predict(state, np.zeros((64, 64, 3), np.uint8))
        assert output.prob.shape == (64, 64, 2)
        assert output.embeddings.shape == (32, 32, 16)
        assert output.num_classes == 2

    def test_tiled_large_image(self, tiny_model_config: ModelConfig) -> None:
        """Test a larger image is tiled and stitched to its own size."""
        state = _state(tiny_model_config, ["a"])
        image = np.random.default_rng(1).integers(0, 256, (96, 80, 3)).astype(np.uint8)
        output = predict(state, image)
        assert output.prob.shape == (96, 80, 1)
        assert output.embeddings.shape == (48, 40, 16)
        assert 0.0 <= output.prob.min() <= output.prob.max() <= 1.0

    @pytest.mark.parametrize("shape", [(32, 64, 3), (64, 64), (64, 64, 4)])
    def test_bad_input(self, tiny_model_config: ModelConfig, shape: tuple[int, ...]) -> None:
        """Test small or non-RGB images raise."""
        state = _state(tiny_model_config, ["a"])
        with pytest.raises(ShapeError):
            predict(state, np.zeros(shape, np.uint8))
