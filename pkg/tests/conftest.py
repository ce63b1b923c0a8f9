"""Shared fixtures: a small deterministic dataset and a desk-scale model.

Everything here uses the seeded convolutional test backbone so the suite
runs on any machine without downloaded weights.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

from famcount.data import AnnotatedImage, Box, Point
from famcount.model import PipelineConfig, build_model, save_checkpoint
from famcount.synth import make_synthetic_suite
from famcount.train import TrainConfig, train

torch.set_num_threads(1)

TEST_PIPELINE = PipelineConfig(resize_height=96, backbone="tiny")


def make_image(
    image_id: str = "img",
    width: int = 128,
    height: int = 96,
    n_dots: int = 6,
    n_boxes: int = 2,
    seed: int = 0,
) -> AnnotatedImage:
    """Random-noise image with jittered-grid dots and dot-centered boxes."""
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    dots = []
    for _ in range(n_dots):
        dots.append(Point(float(rng.uniform(8, width - 8)), float(rng.uniform(8, height - 8))))
    boxes = []
    for p in dots[:n_boxes]:
        r = 6.0
        boxes.append(Box(max(0.0, p.x - r), max(0.0, p.y - r),
                         min(float(width), p.x + r), min(float(height), p.y + r)))
    return AnnotatedImage(image_id, width, height, dots, boxes, "test", pixels=pixels)


@pytest.fixture(scope="session")
def tiny_model():
    return build_model(TEST_PIPELINE, seed=1)


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthdata")
    return make_synthetic_suite(
        root, n_train=3, seed=7, height=96, width=128, min_count=5, max_count=9
    )


@pytest.fixture(scope="session")
def trained_checkpoint(tmp_path_factory, synth_dataset):
    """A briefly trained tiny-backbone checkpoint for service/CLI tests."""
    ckpt_dir = tmp_path_factory.mktemp("ckpt")
    model = build_model(
        PipelineConfig(resize_height=96, backbone="tiny", density_scale=1000.0), seed=1
    )
    train(model, synth_dataset, TrainConfig(
        learning_rate=1e-3, batch_size=3, epochs=10, max_steps=10,
        checkpoint_dir=ckpt_dir, seed=0,
    ))
    return save_checkpoint(model, ckpt_dir / "model.pt")
