"""Density decoder: correlation stack in, full-resolution density map out.

The only trainable component. Layer stack: 7x7 conv to 196 channels, 5x5 to
128, 3x3 to 64, 1x1 to 32, 1x1 to 1, each followed by ReLU, with a 2x
bilinear upsample after the first three convs. Three 2x upsamplings take
stride-8 input to stride-1; a final bilinear resize absorbs any rounding
residue so the output matches the input pixel size exactly.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError
from .targets import DensityMap

HEAD_VERSION = 1

# (kernel size, out channels, upsample 2x afterwards)
_LAYER_SPEC = (
    (7, 196, True),
    (5, 128, True),
    (3, 64, True),
    (1, 32, False),
    (1, 1, False),
)


class DensityHead(nn.Module):
    def __init__(self, in_channels: int = 6):
        super().__init__()
        self.in_channels = in_channels
        convs = []
        c_in = in_channels
        for k, c_out, _ in _LAYER_SPEC:
            convs.append(nn.Conv2d(c_in, c_out, k, padding=k // 2))
            c_in = c_out
        self.convs = nn.ModuleList(convs)

    def forward(self, x: torch.Tensor, out_hw: tuple[int, int]) -> torch.Tensor:
        """(1, C, h, w) or (C, h, w) stack -> (H, W) non-negative map."""
        if x.dim() == 3:
            x = x.unsqueeze(0)
        if x.shape[1] != self.in_channels:
            raise ConfigurationError(
                f"stack has {x.shape[1]} channels, head expects {self.in_channels}"
            )
        for conv, (_, _, upsample) in zip(self.convs, _LAYER_SPEC):
            x = F.relu(conv(x))
            if upsample:
                x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        if x.shape[-2:] != out_hw:
            x = F.interpolate(x, size=out_hw, mode="bilinear", align_corners=False)
        return x.squeeze(0).squeeze(0)


def init_head(seed: int, in_channels: int = 6) -> DensityHead:
    """Deterministic fan-in-scaled uniform init for weights, zero biases."""
    head = DensityHead(in_channels)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for conv in head.convs:
            fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
            bound = fan_in ** -0.5
            conv.weight.uniform_(-bound, bound, generator=g)
            conv.bias.zero_()
    return head


def count(d) -> float:
    """Total mass of a density map (the object count)."""
    if isinstance(d, DensityMap):
        return d.total()
    if isinstance(d, torch.Tensor):
        return float(d.detach().sum(dtype=torch.float64))
    import numpy as np

    return float(np.sum(np.asarray(d), dtype=np.float64))
