"""Density head training loop.

Only the head sees the optimizer; the backbone stays frozen, which also
means every image's correlation stack and target map can be computed once
and cached in memory for the whole run. Model selection uses val MAE
without per-image refinement.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import CountingDataset
from .errors import ConfigurationError, FamcountError
from .head import count
from .losses import mse_loss
from .model import CountingModel, save_checkpoint
from .targets import generate_target

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 1
    epochs: int = 1500
    seed: int = 0
    checkpoint_dir: str | Path | None = None
    patience: int = 100
    max_steps: int | None = None  # hard cap on optimizer steps, None = unlimited
    grad_clip: float | None = None
    lr_schedule: str = "constant"  # "constant" or "cosine" (decay to 0 over epochs)
    target_train_mae: float | None = None  # stop once train MAE reaches this

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be at least 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigurationError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.target_train_mae is not None and self.target_train_mae < 0:
            raise ConfigurationError("target_train_mae must be non-negative")


@dataclass
class TrainResult:
    epochs_run: int = 0
    steps_run: int = 0
    final_train_mae: float = float("nan")
    best_val_mae: float = float("nan")
    best_epoch: int = -1
    best_checkpoint: Path | None = None
    last_checkpoint: Path | None = None
    history: list[dict] = field(default_factory=list)
    wall_time: float = 0.0


@dataclass
class _Sample:
    image_id: str
    stack: torch.Tensor        # (channels, h, w)
    target: torch.Tensor       # (H, W) float32
    true_count: float
    out_hw: tuple[int, int]


def _build_cache(model: CountingModel, dataset: CountingDataset, split: str) -> list[_Sample]:
    """Precompute correlation stacks and density targets for one split.

    Targets are premultiplied by the model's density_scale, so the loss
    regresses the head's raw output directly. Images that cannot be
    prepared (degenerate boxes after resize, missing pixels) are skipped
    with a warning rather than aborting the run.
    """
    scale = model.config.density_scale
    samples: list[_Sample] = []
    for image in dataset.split_images(split):
        try:
            prepared = model.prepare(image)
            resized = prepared.resized
            target = generate_target(resized.dots, resized.height, resized.width)
        except (FamcountError, ValueError) as exc:
            logger.warning("skipping %s/%s: %s", split, image.id, exc)
            continue
        samples.append(_Sample(
            image_id=image.id,
            stack=prepared.stack.values,
            target=torch.from_numpy((target.values * scale).astype(np.float32)),
            true_count=float(len(resized.dots)),
            out_hw=(resized.height, resized.width),
        ))
    return samples


def _split_mae(model: CountingModel, samples: list[_Sample]) -> float:
    scale = model.config.density_scale
    model.head.eval()
    errs = []
    with torch.no_grad():
        for s in samples:
            dens = model.head(s.stack.unsqueeze(0), s.out_hw)
            errs.append(abs(count(dens) / scale - s.true_count))
    return float(np.mean(errs)) if errs else float("nan")


def train(
    model: CountingModel,
    dataset: CountingDataset,
    config: TrainConfig | None = None,
) -> TrainResult:
    """Fit the density head with Adam; returns metrics and checkpoint paths."""
    config = config or TrainConfig()
    result = TrainResult()
    start = time.perf_counter()

    train_samples = _build_cache(model, dataset, "train")
    if not train_samples:
        raise ConfigurationError("no usable training images")
    val_samples = _build_cache(model, dataset, "val") if "val" in dataset.splits else []
    logger.info("cached %d train / %d val images", len(train_samples), len(val_samples))

    ckpt_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else None
    log_fh = None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(ckpt_dir / "train_log.jsonl", "w")

    optimizer = torch.optim.Adam(model.head.parameters(), lr=config.learning_rate)
    scheduler = None
    if config.lr_schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=config.epochs
        )
    rng = np.random.default_rng(config.seed)
    best_val = float("inf")
    epochs_since_best = 0
    steps = 0
    stop = False

    try:
        for epoch in range(config.epochs):
            model.head.train()
            order = rng.permutation(len(train_samples))
            epoch_losses = []
            for lo in range(0, len(order), config.batch_size):
                batch = [train_samples[i] for i in order[lo:lo + config.batch_size]]
                optimizer.zero_grad()
                loss = torch.zeros(())
                for s in batch:
                    dens = model.head(s.stack.unsqueeze(0), s.out_hw)
                    loss = loss + mse_loss(dens, s.target)
                loss = loss / len(batch)
                loss.backward()
                if config.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(model.head.parameters(), config.grad_clip)
                optimizer.step()
                epoch_losses.append(float(loss.detach()))
                steps += 1
                if config.max_steps is not None and steps >= config.max_steps:
                    stop = True
                    break

            if scheduler is not None:
                scheduler.step()

            train_mae = _split_mae(model, train_samples)
            val_mae = _split_mae(model, val_samples) if val_samples else float("nan")
            record = {
                "epoch": epoch,
                "steps": steps,
                "train_loss": float(np.mean(epoch_losses)),
                "train_mae": train_mae,
                "val_mae": val_mae,
            }
            result.history.append(record)
            if log_fh is not None:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            logger.info(
                "epoch %d: loss %.3e train_mae %.3f val_mae %.3f",
                epoch, record["train_loss"], train_mae, val_mae,
            )

            if ckpt_dir is not None:
                result.last_checkpoint = save_checkpoint(
                    model, ckpt_dir / "last.pt", meta={"epoch": epoch, **record}
                )
            select_metric = val_mae if val_samples else train_mae
            if select_metric < best_val:
                best_val = select_metric
                epochs_since_best = 0
                result.best_epoch = epoch
                result.best_val_mae = select_metric
                if ckpt_dir is not None:
                    result.best_checkpoint = save_checkpoint(
                        model, ckpt_dir / "best.pt", meta={"epoch": epoch, **record}
                    )
            else:
                epochs_since_best += 1

            result.epochs_run = epoch + 1
            result.steps_run = steps
            if stop:
                logger.info("reached max_steps=%d, stopping", config.max_steps)
                break
            if config.target_train_mae is not None and train_mae <= config.target_train_mae:
                logger.info(
                    "train MAE %.3f at or below target %.3f, stopping",
                    train_mae, config.target_train_mae,
                )
                break
            if config.patience and epochs_since_best >= config.patience:
                logger.info("no improvement for %d epochs, stopping", config.patience)
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    result.final_train_mae = _split_mae(model, train_samples)
    result.wall_time = time.perf_counter() - start
    return result
