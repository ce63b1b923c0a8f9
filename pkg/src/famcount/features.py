"""Image feature pyramids and ROI-cropped exemplar kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import BLOCK_STRIDES
from .data import Box
from .errors import ImageTooSmallError, OutOfBoundsError

DEFAULT_BLOCKS = (3, 4)
DEFAULT_SCALES = (0.9, 1.0, 1.1)

MIN_IMAGE_SIZE = 32


@dataclass
class FeaturePyramid:
    """Per-block feature grids with stride metadata."""

    levels: dict[int, torch.Tensor]  # block id -> (C, h, w)
    strides: dict[int, int]
    image_size: tuple[int, int]  # (H, W) of the pixels that produced it


@dataclass
class ExemplarKernelSet:
    """ROI-cropped exemplar feature kernels at multiple scales."""

    kernels: dict[tuple[int, int, float], torch.Tensor]  # (exemplar, block, scale) -> (C, kh, kw)
    n_exemplars: int
    blocks: tuple[int, ...] = DEFAULT_BLOCKS
    scales: tuple[float, ...] = DEFAULT_SCALES


def normalize_pixels(pixels: np.ndarray, mean: Sequence[float], std: Sequence[float]) -> torch.Tensor:
    """uint8 H x W x 3 -> normalized float tensor (1, 3, H, W)."""
    x = torch.from_numpy(np.array(pixels, dtype=np.float32, copy=True)).div_(255.0)
    x = x.permute(2, 0, 1).unsqueeze(0)
    m = torch.tensor(mean).view(1, 3, 1, 1)
    s = torch.tensor(std).view(1, 3, 1, 1)
    return (x - m) / s


def extract_image_features(backbone: nn.Module, pixels: np.ndarray) -> FeaturePyramid:
    """Run the frozen backbone; returns stride-8 and stride-16 feature grids."""
    h, w = pixels.shape[:2]
    if h < MIN_IMAGE_SIZE or w < MIN_IMAGE_SIZE:
        raise ImageTooSmallError(f"image {h}x{w} below minimum {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")
    if h % 8 or w % 8:
        raise ValueError(f"image size {h}x{w} must be a multiple of 8 (resize first)")
    x = normalize_pixels(pixels, backbone.mean, backbone.std)
    with torch.no_grad():
        feats = backbone(x)
    levels = {b: f.squeeze(0) for b, f in feats.items()}
    return FeaturePyramid(levels=levels, strides=dict(BLOCK_STRIDES), image_size=(h, w))


def _crop_cells(lo: float, hi: float, stride: int, n_cells: int) -> tuple[int, int]:
    """Box edge pixels -> feature-cell range, rounded outward, min 1 cell."""
    a = int(math.floor(lo / stride))
    b = int(math.ceil(hi / stride))
    a = min(max(a, 0), n_cells - 1)
    b = min(max(b, a + 1), n_cells)
    return a, b


def extract_exemplar_features(
    pyr: FeaturePyramid,
    boxes: Sequence[Box],
    scales: Sequence[float] = DEFAULT_SCALES,
    blocks: Sequence[int] = DEFAULT_BLOCKS,
) -> ExemplarKernelSet:
    """Crop each box from each pyramid level and rescale to each scale.

    Scale 1.0 is the untouched crop; other scales resize the crop
    bilinearly to round(k * factor), minimum 1.
    """
    if not 1 <= len(boxes) <= 3:
        raise ValueError(f"need 1-3 exemplar boxes, got {len(boxes)}")
    H, W = pyr.image_size
    kernels: dict[tuple[int, int, float], torch.Tensor] = {}
    for i, b in enumerate(boxes):
        if b.x1 < 0 or b.y1 < 0 or b.x2 > W or b.y2 > H:
            raise OutOfBoundsError(f"exemplar box {i} {b} outside image {H}x{W}")
        for block in blocks:
            level = pyr.levels[block]
            stride = pyr.strides[block]
            _, hb, wb = level.shape
            r0, r1 = _crop_cells(b.y1, b.y2, stride, hb)
            c0, c1 = _crop_cells(b.x1, b.x2, stride, wb)
            crop = level[:, r0:r1, c0:c1]
            for s in scales:
                if s == 1.0:
                    kernels[(i, block, s)] = crop
                    continue
                kh = max(1, int(round(crop.shape[1] * s)))
                kw = max(1, int(round(crop.shape[2] * s)))
                resized = F.interpolate(
                    crop.unsqueeze(0), size=(kh, kw), mode="bilinear", align_corners=False
                ).squeeze(0)
                kernels[(i, block, s)] = resized
    return ExemplarKernelSet(
        kernels=kernels, n_exemplars=len(boxes),
        blocks=tuple(blocks), scales=tuple(scales),
    )
