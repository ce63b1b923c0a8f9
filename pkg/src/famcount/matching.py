"""Sliding cross-correlation of exemplar kernels against image features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from .errors import KernelTooLargeError
from .features import DEFAULT_BLOCKS, DEFAULT_SCALES, ExemplarKernelSet, FeaturePyramid


@dataclass
class CorrelationStack:
    """Fixed-channel correlation maps at block-3 resolution.

    Channel order is block-major then scale-major: with the default two
    blocks and three scales that is block 3 at scales (0.9, 1.0, 1.1)
    followed by block 4 at the same scales, 6 channels total regardless of
    how many exemplars (1-3) were supplied.
    """

    values: torch.Tensor  # (channels, h, w)
    blocks: tuple[int, ...] = DEFAULT_BLOCKS
    scales: tuple[float, ...] = DEFAULT_SCALES

    @property
    def channels(self) -> int:
        return self.values.shape[0]


def _correlate_one(level: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """Size-preserving cross-correlation, normalized by kernel element count."""
    c, h, w = level.shape
    kc, kh, kw = kernel.shape
    if kh > h or kw > w:
        raise KernelTooLargeError(f"kernel {kh}x{kw} larger than feature grid {h}x{w}")
    pad = ((kw - 1) // 2, kw // 2, (kh - 1) // 2, kh // 2)
    x = F.pad(level.unsqueeze(0), pad)
    r = F.conv2d(x, kernel.unsqueeze(0))
    return r.squeeze(0).squeeze(0) / float(c * kh * kw)


def correlate(pyr: FeaturePyramid, kernels: ExemplarKernelSet) -> CorrelationStack:
    """Correlate every (block, scale) kernel group and stack the maps.

    Per (block, scale): each exemplar's response map is computed with zero
    padding that preserves spatial size, size-normalized, and the maps are
    averaged over exemplars; block-4 maps are upsampled to block-3
    resolution before stacking.
    """
    blocks, scales = kernels.blocks, kernels.scales
    h3 = pyr.image_size[0] // 8
    w3 = pyr.image_size[1] // 8
    maps = []
    with torch.no_grad():
        for block in blocks:
            level = pyr.levels[block]
            for scale in scales:
                per_exemplar = [
                    _correlate_one(level, kernels.kernels[(i, block, scale)])
                    for i in range(kernels.n_exemplars)
                ]
                if len(per_exemplar) == 1:
                    m = per_exemplar[0]
                else:
                    stacked = torch.stack(per_exemplar)
                    # elementwise sort fixes the summation order, so exemplar
                    # ordering cannot perturb the mean even in the last ulp
                    stacked, _ = stacked.sort(dim=0)
                    m = stacked.sum(dim=0) / float(len(per_exemplar))
                if m.shape != (h3, w3):
                    m = F.interpolate(
                        m.unsqueeze(0).unsqueeze(0), size=(h3, w3),
                        mode="bilinear", align_corners=False,
                    ).squeeze(0).squeeze(0)
                maps.append(m)
        values = torch.stack(maps)
    return CorrelationStack(values=values, blocks=blocks, scales=scales)
