"""Per-image gradient refinement of the density head.

The backbone is frozen, so the correlation stack for an image is a
constant; only a throwaway copy of the head is updated. Each step descends
the combined box-consistency objective with plain gradient descent. The
trace records the objective and count before every step plus once after
the last, so ``steps`` updates yield ``steps + 1`` samples. If the
objective goes non-finite the loop aborts, the divergence flag is set,
and the last finite state is returned.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from typing import Sequence

import torch

from .data import Box
from .head import DensityHead, count
from .losses import AdaptationConfig, adaptation_loss
from .matching import CorrelationStack
from .targets import DensityMap


@dataclass
class AdaptationTrace:
    """Objective and count per step, plus timing and divergence status."""

    losses: list[float] = field(default_factory=list)
    counts: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    diverged: bool = False

    @property
    def steps_run(self) -> int:
        return max(0, len(self.losses) - 1)


def predict_no_adapt(head: DensityHead, stack: CorrelationStack,
                     out_hw: tuple[int, int], output_scale: float = 1.0) -> DensityMap:
    """Single forward pass with the head untouched.

    ``output_scale`` divides the raw head output back to plain density
    (heads may be trained against scaled targets; see PipelineConfig).
    """
    head.eval()
    with torch.no_grad():
        dens = head(stack.values.unsqueeze(0), out_hw) / output_scale
    return DensityMap(dens.cpu().numpy())


def adapt_and_count(
    head: DensityHead,
    stack: CorrelationStack,
    boxes: Sequence[Box],
    out_hw: tuple[int, int],
    config: AdaptationConfig | None = None,
    output_scale: float = 1.0,
) -> tuple[DensityMap, AdaptationTrace]:
    """Refine a copy of ``head`` on one image and return its density map.

    ``head`` itself is never modified. With ``config.steps == 0`` the
    result is bit-identical to ``predict_no_adapt``. Losses and counts
    are computed on plain density (raw output / ``output_scale``).
    """
    config = config or AdaptationConfig()
    trace = AdaptationTrace()
    start = time.perf_counter()

    if config.steps == 0:
        dens = predict_no_adapt(head, stack, out_hw, output_scale)
        with torch.no_grad():
            loss = adaptation_loss(torch.from_numpy(dens.values), boxes, config)
        trace.losses.append(float(loss))
        trace.counts.append(count(dens))
        trace.wall_time = time.perf_counter() - start
        return dens, trace

    local = copy.deepcopy(head)
    local.train()
    params = [p for p in local.parameters() if p.requires_grad]
    x = stack.values.unsqueeze(0)

    best_dens: torch.Tensor | None = None
    for step in range(config.steps + 1):
        for p in params:
            p.grad = None
        dens = local(x, out_hw) / output_scale
        loss = adaptation_loss(dens, boxes, config)
        loss_val = float(loss.detach())
        if not torch.isfinite(loss.detach()):
            trace.diverged = True
            break
        trace.losses.append(loss_val)
        trace.counts.append(count(dens.detach()))
        best_dens = dens.detach()
        if step == config.steps:
            break
        loss.backward()
        with torch.no_grad():
            for p in params:
                if p.grad is not None:
                    p -= config.learning_rate * p.grad

    trace.wall_time = time.perf_counter() - start
    if best_dens is None:
        # diverged on the very first evaluation; fall back to the source head
        return predict_no_adapt(head, stack, out_hw, output_scale), trace
    return DensityMap(best_dens.cpu().numpy()), trace
