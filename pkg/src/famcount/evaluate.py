"""Split evaluation: MAE/RMSE metrics, constant baselines, ablations.

Counts are compared as raw reals (no rounding of predictions). Reports
carry per-image rows plus the configuration that produced them, and can
be re-aggregated from the rows for consistency checks.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .adapt import AdaptationTrace, adapt_and_count, predict_no_adapt
from .data import AnnotatedImage, CountingDataset
from .errors import FamcountError
from .losses import AdaptationConfig
from .model import CountingModel, PipelineConfig, build_model
from .targets import DensityMap

logger = logging.getLogger(__name__)


def mae(gt: Sequence[float], pred: Sequence[float]) -> float:
    """Mean absolute error between ground-truth and predicted counts."""
    if len(gt) != len(pred):
        raise ValueError(f"length mismatch: {len(gt)} vs {len(pred)}")
    if len(gt) == 0:
        raise ValueError("need at least one pair")
    g = np.asarray(gt, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    return float(np.mean(np.abs(g - p)))


def rmse(gt: Sequence[float], pred: Sequence[float]) -> float:
    """Root mean squared error between ground-truth and predicted counts."""
    if len(gt) != len(pred):
        raise ValueError(f"length mismatch: {len(gt)} vs {len(pred)}")
    if len(gt) == 0:
        raise ValueError("need at least one pair")
    g = np.asarray(gt, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    return float(np.sqrt(np.mean((g - p) ** 2)))


def baseline_predict(train_counts: Sequence[float], mode: str) -> float:
    """Constant predictor: mean or median of the training-split counts."""
    if len(train_counts) == 0:
        raise ValueError("empty training split")
    if mode == "mean":
        return float(np.mean(train_counts))
    if mode == "median":
        return float(np.median(train_counts))
    raise ValueError(f"unknown baseline mode '{mode}' (want mean or median)")


@dataclass
class EvalReport:
    """Aggregate metrics plus per-image rows for one split evaluation."""

    split: str
    n: int
    mae: float
    rmse: float
    per_image: list[dict]
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def recompute(self) -> tuple[float, float]:
        gt = [r["gt_count"] for r in self.per_image]
        pred = [r["pred_count"] for r in self.per_image]
        return mae(gt, pred), rmse(gt, pred)

    def to_json(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=1, sort_keys=True)
        return path

    def to_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        cols = ["id", "gt_count", "pred_count", "abs_err", "n_exemplars_used"]
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            for row in self.per_image:
                w.writerow(row)
        return path


def _finish_report(split: str, rows: list[dict], config: dict, started: float) -> EvalReport:
    gt = [r["gt_count"] for r in rows]
    pred = [r["pred_count"] for r in rows]
    return EvalReport(
        split=split,
        n=len(rows),
        mae=mae(gt, pred),
        rmse=rmse(gt, pred),
        per_image=rows,
        config=config,
        wall_time=time.perf_counter() - started,
    )


def predict_image(
    model: CountingModel,
    image: AnnotatedImage,
    n_exemplars: int | None = None,
    adapt: bool = False,
    adapt_config: AdaptationConfig | None = None,
) -> tuple[DensityMap, AdaptationTrace | None, int]:
    """Predict one image's density map; returns (map, trace, boxes used).

    ``n_exemplars`` selects the first n annotated boxes; an image with
    fewer boxes contributes all it has.
    """
    boxes = list(image.exemplars)
    if n_exemplars is not None:
        if not 1 <= n_exemplars <= 3:
            raise ValueError(f"n_exemplars must be 1..3, got {n_exemplars}")
        if len(boxes) < n_exemplars:
            logger.warning(
                "image '%s' has %d exemplar boxes, wanted %d; using all",
                image.id, len(boxes), n_exemplars,
            )
        boxes = boxes[:n_exemplars]
    prepared = model.prepare(image, boxes=boxes)
    out_hw = (prepared.resized.height, prepared.resized.width)
    scale = model.config.density_scale
    if adapt:
        dens, trace = adapt_and_count(
            model.head, prepared.stack, prepared.boxes, out_hw, adapt_config,
            output_scale=scale,
        )
    else:
        dens = predict_no_adapt(model.head, prepared.stack, out_hw, output_scale=scale)
        trace = None
    return dens, trace, len(boxes)


def evaluate_split(
    model: CountingModel,
    dataset: CountingDataset,
    split: str,
    adapt: bool = False,
    n_exemplars: int = 3,
    adapt_config: AdaptationConfig | None = None,
    on_image: Callable[[str, float, float], None] | None = None,
) -> EvalReport:
    """Run the model over one split and aggregate MAE/RMSE.

    Images that cannot be processed are skipped with a warning. ``on_image``
    is a progress hook called with (id, gt, pred) after each image.
    """
    cfg = adapt_config or AdaptationConfig()
    started = time.perf_counter()
    rows: list[dict] = []
    for image in dataset.split_images(split):
        try:
            dens, _, used = predict_image(
                model, image, n_exemplars=n_exemplars, adapt=adapt, adapt_config=cfg
            )
        except (FamcountError, ValueError) as exc:
            logger.warning("skipping %s/%s: %s", split, image.id, exc)
            continue
        pred = dens.total()
        gt = float(image.count)
        rows.append({
            "id": image.id,
            "gt_count": gt,
            "pred_count": pred,
            "abs_err": abs(gt - pred),
            "n_exemplars_used": used,
        })
        if on_image is not None:
            on_image(image.id, gt, pred)
    if not rows:
        raise ValueError(f"no evaluable images in split '{split}'")
    config = {
        "adapt": adapt,
        "n_exemplars": n_exemplars,
        "lambda1": cfg.lambda1,
        "lambda2": cfg.lambda2,
        "steps": cfg.steps,
        "learning_rate": cfg.learning_rate,
        "model": model.config.fingerprint(),
    }
    return _finish_report(split, rows, config, started)


def baseline_report(dataset: CountingDataset, split: str, mode: str) -> EvalReport:
    """Evaluate the constant mean/median-of-train predictor on a split."""
    started = time.perf_counter()
    train_counts = [float(img.count) for img in dataset.split_images("train")]
    constant = baseline_predict(train_counts, mode)
    rows = [
        {
            "id": img.id,
            "gt_count": float(img.count),
            "pred_count": constant,
            "abs_err": abs(float(img.count) - constant),
            "n_exemplars_used": 0,
        }
        for img in dataset.split_images(split)
    ]
    if not rows:
        raise ValueError(f"split '{split}' is empty")
    return _finish_report(split, rows, {"baseline": mode, "constant": constant}, started)


@dataclass(frozen=True)
class AblationVariant:
    """One row of the component study: which features and refinement run."""

    name: str
    blocks: tuple[int, ...] = (3, 4)
    scales: tuple[float, ...] = (0.9, 1.0, 1.1)
    adapt: bool = False


DEFAULT_ABLATION = (
    AblationVariant("coarse-block-only", blocks=(3,)),
    AblationVariant("single-scale", scales=(1.0,)),
    AblationVariant("no-refinement"),
    AblationVariant("full", adapt=True),
)


def run_component_ablation(
    dataset: CountingDataset,
    split: str = "val",
    variants: Sequence[AblationVariant] = DEFAULT_ABLATION,
    base_config: PipelineConfig | None = None,
    train_fn: Callable[[CountingModel], None] | None = None,
    n_exemplars: int = 3,
    adapt_config: AdaptationConfig | None = None,
    seed: int = 0,
) -> dict[str, EvalReport]:
    """Evaluate each feature/refinement combination end to end.

    A fresh model is built per variant (channel counts differ across
    block/scale choices); ``train_fn`` may fit each head before its
    evaluation, otherwise heads are evaluated as initialized.
    """
    base = base_config or PipelineConfig()
    out: dict[str, EvalReport] = {}
    for variant in variants:
        config = PipelineConfig(
            blocks=variant.blocks,
            scales=variant.scales,
            resize_height=base.resize_height,
            backbone=base.backbone,
            backbone_seed=base.backbone_seed,
            density_scale=base.density_scale,
        )
        model = build_model(config, seed=seed)
        if train_fn is not None:
            train_fn(model)
        report = evaluate_split(
            model, dataset, split,
            adapt=variant.adapt, n_exemplars=n_exemplars, adapt_config=adapt_config,
        )
        report.config["variant"] = variant.name
        out[variant.name] = report
        logger.info("ablation %s: mae %.3f rmse %.3f", variant.name, report.mae, report.rmse)
    return out
