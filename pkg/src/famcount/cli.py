"""Command-line entry points.

Subcommands: synth, make-targets, train, eval, count, serve. Each prints
one machine-readable JSON line on stdout; all logging goes to stderr.
Exit codes: 0 ok, 2 usage, 3 checkpoint, 4 image, 5 dataset, 6 IO.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from .data import AnnotatedImage, Box, load_dataset, resize_for_model
from .errors import (
    AnnotationValidationError,
    CheckpointError,
    ConfigurationError,
    DatasetLoadError,
    DegenerateExemplarError,
    EmptyAnnotationError,
    FamcountError,
    OutOfBoundsError,
    SplitIntegrityError,
)
from .evaluate import baseline_report, evaluate_split, predict_image
from .figures import save_eval_figures, save_heatmap
from .losses import AdaptationConfig
from .model import PipelineConfig, build_model, load_checkpoint
from .synth import make_synthetic_suite
from .targets import generate_target, make_gaussian_spec, save_target_cache
from .train import TrainConfig, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CHECKPOINT = 3
EXIT_IMAGE = 4
EXIT_DATASET = 5
EXIT_IO = 6

_DATASET_ERRORS = (DatasetLoadError, AnnotationValidationError, SplitIntegrityError)


def _emit(obj: dict) -> None:
    print(json.dumps(obj))


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _parse_box(text: str) -> Box:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"--box wants x1,y1,x2,y2, got '{text}'")
    try:
        x1, y1, x2, y2 = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--box coordinates must be numbers, got '{text}'")
    return Box(x1, y1, x2, y2)


def _checkpoint_arg(args) -> Path | None:
    if args.checkpoint:
        return Path(args.checkpoint)
    env = os.environ.get("FAMCOUNT_CKPT")
    return Path(env) if env else None


def cmd_synth(args) -> int:
    dataset = make_synthetic_suite(
        args.out, n_train=args.n, seed=args.seed,
        height=args.height, width=args.width,
        min_count=args.min_count, max_count=args.max_count,
    )
    _emit({
        "out": str(args.out),
        "images": len(dataset),
        "splits": {name: len(s.image_ids) for name, s in dataset.splits.items()},
    })
    return EXIT_OK


def cmd_make_targets(args) -> int:
    dataset = load_dataset(args.data)
    out_dir = Path(args.out)
    written = 0
    for image in dataset.images.values():
        img = resize_for_model(image, args.height) if args.height else image
        try:
            spec = make_gaussian_spec(img.dots)
            target = generate_target(img.dots, img.height, img.width)
        except EmptyAnnotationError:
            logger.warning("skipping '%s': no dot annotations", img.id)
            continue
        save_target_cache(out_dir, img.id, target, spec)
        written += 1
    _emit({"out": str(out_dir), "targets": written})
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    pipeline = PipelineConfig(
        resize_height=args.height,
        backbone=args.backbone,
        backbone_seed=args.backbone_seed,
        density_scale=args.density_scale,
    )
    model = build_model(pipeline, seed=args.seed, backbone_weights=args.backbone_weights)
    config = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        checkpoint_dir=args.out,
        patience=args.patience,
        max_steps=args.max_steps,
        grad_clip=args.grad_clip,
        lr_schedule=args.lr_schedule,
        target_train_mae=args.target_train_mae,
    )
    result = train(model, dataset, config)
    _emit({
        "epochs": result.epochs_run,
        "steps": result.steps_run,
        "final_train_mae": result.final_train_mae,
        "best_val_mae": result.best_val_mae,
        "best_epoch": result.best_epoch,
        "best_checkpoint": str(result.best_checkpoint) if result.best_checkpoint else None,
        "last_checkpoint": str(result.last_checkpoint) if result.last_checkpoint else None,
        "seconds": result.wall_time,
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = _checkpoint_arg(args)
    if ckpt is None:
        raise CheckpointError("no checkpoint given (use --checkpoint or FAMCOUNT_CKPT)")
    model = load_checkpoint(ckpt, backbone_weights=args.backbone_weights)
    dataset = load_dataset(args.data)
    if args.baseline != "none":
        report = baseline_report(dataset, args.split, args.baseline)
    else:
        report = evaluate_split(
            model, dataset, args.split,
            adapt=args.adapt, n_exemplars=args.exemplars,
            adapt_config=AdaptationConfig(steps=args.steps),
        )
    report_path = Path(args.report)
    report.to_json(report_path)
    report.to_csv(report_path.with_suffix(".csv"))
    if not args.no_figures:
        save_eval_figures(report, report_path.parent)
    if args.heatmap_dir:
        heat_dir = Path(args.heatmap_dir)
        for image in dataset.split_images(args.split):
            try:
                dens, _, _ = predict_image(model, image, n_exemplars=args.exemplars,
                                           adapt=args.adapt)
            except (FamcountError, ValueError) as exc:
                logger.warning("heatmap skipped for '%s': %s", image.id, exc)
                continue
            save_heatmap(dens, heat_dir / f"{image.id}.png")
    _emit({
        "split": report.split,
        "n": report.n,
        "mae": report.mae,
        "rmse": report.rmse,
        "report": str(report_path),
    })
    return EXIT_OK


def cmd_count(args) -> int:
    if not args.box:
        return _usage_error("at least one --box x1,y1,x2,y2 is required")
    if len(args.box) > 3:
        return _usage_error(f"at most 3 --box flags allowed, got {len(args.box)}")
    ckpt = _checkpoint_arg(args)
    if ckpt is None:
        raise CheckpointError("no checkpoint given (use --checkpoint or FAMCOUNT_CKPT)")
    model = load_checkpoint(ckpt, backbone_weights=args.backbone_weights)
    try:
        with Image.open(args.image) as im:
            pixels = np.asarray(im.convert("RGB"))
    except Exception as exc:
        print(f"error: cannot decode image '{args.image}': {exc}", file=sys.stderr)
        return EXIT_IMAGE
    image = AnnotatedImage(
        Path(args.image).stem, pixels.shape[1], pixels.shape[0],
        dots=[], exemplars=args.box, category="cli", pixels=pixels,
    )
    started = time.perf_counter()
    try:
        dens, trace, _ = predict_image(
            model, image, adapt=args.adapt,
            adapt_config=AdaptationConfig(steps=args.steps),
        )
    except (OutOfBoundsError, DegenerateExemplarError) as exc:
        return _usage_error(str(exc))
    seconds = time.perf_counter() - started
    if args.heatmap:
        save_heatmap(dens, args.heatmap)
    _emit({
        "count": dens.total(),
        "adapted": bool(args.adapt),
        "steps": trace.steps_run if trace is not None else 0,
        "seconds": seconds,
    })
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ckpt = _checkpoint_arg(args)
    ui_dir = args.ui_dir or os.environ.get("FAMCOUNT_UI_DIR")
    if ui_dir is None and Path("frontend/dist").is_dir():
        ui_dir = "frontend/dist"
    app = create_app(
        checkpoint=ckpt,
        backbone_weights=args.backbone_weights,
        max_concurrency=args.max_concurrency,
        request_timeout=args.timeout,
        spill_dir=args.spill_dir,
        ui_dir=ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="famcount",
        description="Few-shot object counting: density estimation from exemplar boxes.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic blob-counting dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n", type=int, default=8, help="number of training images")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=192)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--min-count", type=int, default=7)
    p.add_argument("--max-count", type=int, default=60)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("make-targets", help="precompute density targets for a dataset")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--out", required=True, help="target cache directory")
    p.add_argument("--height", type=int, default=0,
                   help="resize images to this height first (0 = native size)")
    p.set_defaults(func=cmd_make_targets)

    p = sub.add_parser("train", help="fit the density head on a dataset")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--backbone", default="resnet50", help="feature extractor name")
    p.add_argument("--backbone-weights", default=None, help="backbone weights file")
    p.add_argument("--backbone-seed", type=int, default=0)
    p.add_argument("--height", type=int, default=384, help="training image height")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--epochs", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=100)
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after this many optimizer steps")
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--lr-schedule", default="constant", choices=["constant", "cosine"],
                   help="cosine decays the learning rate to 0 across --epochs")
    p.add_argument("--target-train-mae", type=float, default=None,
                   help="stop as soon as train MAE reaches this value")
    p.add_argument("--density-scale", type=float, default=1.0,
                   help="fit the head to scale*density; predictions divide it out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--checkpoint", default=None, help="checkpoint file (or FAMCOUNT_CKPT)")
    p.add_argument("--backbone-weights", default=None)
    p.add_argument("--adapt", action="store_true", help="refine the head per image")
    p.add_argument("--steps", type=int, default=100, help="refinement steps")
    p.add_argument("--exemplars", type=int, default=3, choices=[1, 2, 3])
    p.add_argument("--baseline", default="none", choices=["none", "mean", "median"],
                   help="evaluate a constant baseline instead of the model")
    p.add_argument("--report", default="eval_report.json", help="report JSON path")
    p.add_argument("--no-figures", action="store_true",
                   help="skip scatter/error figures next to the report")
    p.add_argument("--heatmap-dir", default=None,
                   help="also write one density heatmap PNG per image")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("count", help="count objects in one image")
    p.add_argument("image", help="image file (JPEG or PNG)")
    p.add_argument("--box", action="append", type=_parse_box, default=[],
                   metavar="X1,Y1,X2,Y2", help="exemplar box, repeat 1-3 times")
    p.add_argument("--checkpoint", default=None, help="checkpoint file (or FAMCOUNT_CKPT)")
    p.add_argument("--backbone-weights", default=None)
    p.add_argument("--adapt", action="store_true")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--heatmap", default=None, help="write density heatmap PNG here")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("serve", help="run the HTTP counting service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("FAMCOUNT_PORT", "8000")))
    p.add_argument("--checkpoint", default=None, help="checkpoint file (or FAMCOUNT_CKPT)")
    p.add_argument("--backbone-weights", default=None)
    p.add_argument("--max-concurrency", type=int, default=1)
    p.add_argument("--timeout", type=float, default=120.0,
                   help="per-request model execution timeout in seconds")
    p.add_argument("--spill-dir", default=None, help="also write uploads to this directory")
    p.add_argument("--ui-dir", default=None, help="static UI directory (or FAMCOUNT_UI_DIR)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except _DATASET_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
