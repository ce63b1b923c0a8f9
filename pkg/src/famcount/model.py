"""Pipeline facade: backbone + matcher configuration + density head.

Bundles everything needed to turn an annotated image into a correlation
stack and a density map, and owns checkpoint serialization. Checkpoints
carry a configuration fingerprint (blocks, scales, channel order, backbone,
head channels) so incompatible files are rejected at load.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch

from .backbones import freeze, make_backbone, parameter_checksum
from .data import AnnotatedImage, Box, resize_for_model
from .errors import CheckpointError, ConfigurationError
from .features import (
    DEFAULT_BLOCKS,
    DEFAULT_SCALES,
    extract_exemplar_features,
    extract_image_features,
)
from .head import DensityHead, init_head
from .matching import CorrelationStack, correlate

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Which backbone blocks, kernel scales, and input height the model uses.

    ``density_scale`` is a training aid: the head is fitted to emit
    ``scale * density`` (large targets keep the regression away from the
    all-zero ReLU optimum) and every prediction path divides it back out,
    so densities seen by callers always integrate to the count. 1.0 means
    the head emits plain density.
    """

    blocks: tuple[int, ...] = DEFAULT_BLOCKS
    scales: tuple[float, ...] = DEFAULT_SCALES
    resize_height: int = 384
    backbone: str = "resnet50"
    backbone_seed: int = 0
    density_scale: float = 1.0

    def __post_init__(self):
        if self.density_scale <= 0:
            raise ConfigurationError("density_scale must be positive")

    @property
    def stack_channels(self) -> int:
        return len(self.blocks) * len(self.scales)

    def fingerprint(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "blocks": list(self.blocks),
            "scales": list(self.scales),
            "channel_order": [
                f"block{b}/scale{s}" for b in self.blocks for s in self.scales
            ],
            "backbone": self.backbone,
            "head_in_channels": self.stack_channels,
            "density_scale": self.density_scale,
        }


@dataclass
class PreparedImage:
    """Resized image plus its (constant) correlation stack."""

    resized: AnnotatedImage
    stack: CorrelationStack
    boxes: list[Box]  # exemplar boxes in resized-image coordinates


class CountingModel:
    def __init__(self, config: PipelineConfig, head: DensityHead, backbone: torch.nn.Module):
        self.config = config
        self.head = head
        self.backbone = freeze(backbone)
        self.checkpoint_path: Path | None = None

    def prepare(self, image: AnnotatedImage, boxes: Sequence[Box] | None = None) -> PreparedImage:
        """Resize, extract features, pool exemplar kernels, correlate.

        ``boxes`` (original-image coordinates) overrides the image's own
        exemplars; the stack is constant for a given image because the
        backbone is frozen.
        """
        if boxes is not None:
            image = image.with_boxes(list(boxes))
        if not image.exemplars:
            raise ValueError(f"image '{image.id}' has no exemplar boxes")
        resized = resize_for_model(image, self.config.resize_height)
        pyr = extract_image_features(self.backbone, resized.pixels)
        kernels = extract_exemplar_features(
            pyr, resized.exemplars, scales=self.config.scales, blocks=self.config.blocks
        )
        stack = correlate(pyr, kernels)
        return PreparedImage(resized=resized, stack=stack, boxes=list(resized.exemplars))

    def backbone_checksum(self) -> str:
        return parameter_checksum(self.backbone)

    def head_checksum(self) -> str:
        return parameter_checksum(self.head)


def build_model(
    config: PipelineConfig | None = None,
    seed: int = 0,
    backbone_weights: str | None = None,
) -> CountingModel:
    config = config or PipelineConfig()
    backbone = make_backbone(config.backbone, weights_path=backbone_weights,
                             seed=config.backbone_seed)
    head = init_head(seed, in_channels=config.stack_channels)
    return CountingModel(config, head, backbone)


def save_checkpoint(model: CountingModel, path: Path | str, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "fingerprint": model.config.fingerprint(),
        "head_state": model.head.state_dict(),
        "meta": dict(meta or {}, saved_at=time.time()),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(
    path: Path | str,
    backbone_weights: str | None = None,
    expect_config: PipelineConfig | None = None,
) -> CountingModel:
    """Rebuild a model from a checkpoint; rejects incompatible files."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
        config = PipelineConfig(
            blocks=tuple(payload["config"]["blocks"]),
            scales=tuple(payload["config"]["scales"]),
            resize_height=payload["config"]["resize_height"],
            backbone=payload["config"]["backbone"],
            backbone_seed=payload["config"].get("backbone_seed", 0),
            density_scale=payload["config"].get("density_scale", 1.0),
        )
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    if expect_config is not None and expect_config.fingerprint() != payload["fingerprint"]:
        raise CheckpointError(
            f"checkpoint fingerprint mismatch: {payload['fingerprint']} "
            f"vs expected {expect_config.fingerprint()}"
        )
    model = build_model(config, backbone_weights=backbone_weights)
    model.head.load_state_dict(payload["head_state"])
    model.checkpoint_path = path
    return model
