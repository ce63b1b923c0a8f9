"""Training loss and the two exemplar-derived test-time adaptation losses.

All losses are differentiable torch expressions returning 0-dim tensors:

* ``mse_loss``: pixel-mean squared error against the ground-truth map.
* ``min_count_loss``: hinge penalty for exemplar crops whose density sums
  to less than one; there is at least one object inside each exemplar box.
* ``perturbation_loss``: squared deviation of each exemplar crop from a
  peak-1 Gaussian bump, following the correlation-filter view of the
  density map as a response surface.

The adaptation loss is the weighted sum of the last two.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .data import Box
from .errors import OutOfBoundsError
from .targets import DensityMap


@dataclass(frozen=True)
class AdaptationConfig:
    """Hyperparameters of the per-image adaptation loop."""

    lambda1: float = 1e-9  # weight of the min-count term
    lambda2: float = 1e-4  # weight of the perturbation term
    steps: int = 100
    learning_rate: float = 1e-7

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.learning_rate < 0:
            raise ValueError("adaptation weights and learning rate must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def _as_tensor(d) -> torch.Tensor:
    if isinstance(d, DensityMap):
        return torch.as_tensor(d.values)
    return torch.as_tensor(d)


def crop(d, b: Box) -> torch.Tensor:
    """Sub-grid of the density map covered by a box.

    Rows round(y1)..round(y2) and columns round(x1)..round(x2),
    inclusive-exclusive, at least 1x1.
    """
    t = _as_tensor(d)
    h, w = t.shape
    r0, r1 = round(b.y1), round(b.y2)
    c0, c1 = round(b.x1), round(b.x2)
    if r0 < 0 or c0 < 0 or r1 > h or c1 > w:
        raise OutOfBoundsError(f"box {b} outside {h}x{w} density map")
    r0, c0 = min(r0, h - 1), min(c0, w - 1)
    r1 = max(r1, r0 + 1)
    c1 = max(c1, c0 + 1)
    return t[r0:r1, c0:c1]


def mse_loss(pred, target) -> torch.Tensor:
    """Mean over all pixels of the squared difference."""
    p, t = _as_tensor(pred), _as_tensor(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
    return ((p - t) ** 2).mean()


def min_count_loss(pred, boxes: Sequence[Box]) -> torch.Tensor:
    """Sum over boxes of max(0, 1 - crop mass)."""
    t = _as_tensor(pred)
    total = t.new_zeros(())
    for b in boxes:
        # relu, not clamp: subgradient at a crop mass of exactly 1 is 0
        total = total + torch.relu(1.0 - crop(t, b).sum())
    return total


def perturbation_target(h: int, w: int) -> torch.Tensor:
    """Peak-1 Gaussian bump on an h x w grid, sigma a quarter of each side."""
    if h < 1 or w < 1:
        raise ValueError(f"target size must be >= 1x1, got {h}x{w}")
    sr, sc = h / 4.0, w / 4.0
    rows = torch.arange(h, dtype=torch.float64) - (h - 1) / 2.0
    cols = torch.arange(w, dtype=torch.float64) - (w - 1) / 2.0
    g = torch.exp(-(rows[:, None] ** 2 / (2 * sr ** 2) + cols[None, :] ** 2 / (2 * sc ** 2)))
    return g


def perturbation_loss(pred, boxes: Sequence[Box]) -> torch.Tensor:
    """Sum over boxes of the squared L2 distance crop-to-Gaussian."""
    t = _as_tensor(pred)
    total = t.new_zeros(())
    for b in boxes:
        c = crop(t, b)
        g = perturbation_target(c.shape[0], c.shape[1]).to(c.dtype)
        total = total + ((c - g) ** 2).sum()
    return total


def adaptation_loss(pred, boxes: Sequence[Box], cfg: AdaptationConfig) -> torch.Tensor:
    """cfg.lambda1 * min-count + cfg.lambda2 * perturbation, exactly."""
    return cfg.lambda1 * min_count_loss(pred, boxes) + cfg.lambda2 * perturbation_loss(pred, boxes)
