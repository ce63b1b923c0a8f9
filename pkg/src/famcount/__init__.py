"""Few-shot object counting from exemplar boxes.

A frozen convolutional backbone turns the query image and its exemplar
crops into feature grids; sliding each exemplar kernel over the image at
a few scales yields a correlation stack; a small trainable decoder maps
that stack to a per-pixel density whose integral is the count. At test
time the decoder can be refined per image against box-consistency losses
without touching any stored weights.
"""

from .adapt import AdaptationTrace, adapt_and_count, predict_no_adapt
from .data import (
    AnnotatedImage,
    Box,
    CountingDataset,
    DatasetSplit,
    Point,
    load_dataset,
    resize_for_model,
    save_dataset,
)
from .errors import (
    AnnotationValidationError,
    CheckpointError,
    ConfigurationError,
    DatasetLoadError,
    DegenerateExemplarError,
    EmptyAnnotationError,
    FamcountError,
    ImageTooSmallError,
    KernelTooLargeError,
    OutOfBoundsError,
    SplitIntegrityError,
)
from .evaluate import (
    EvalReport,
    baseline_predict,
    baseline_report,
    evaluate_split,
    mae,
    predict_image,
    rmse,
    run_component_ablation,
)
from .head import DensityHead, count, init_head
from .losses import (
    AdaptationConfig,
    adaptation_loss,
    min_count_loss,
    mse_loss,
    perturbation_loss,
    perturbation_target,
)
from .matching import CorrelationStack, correlate
from .model import (
    CountingModel,
    PipelineConfig,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from .synth import make_synthetic_suite
from .targets import DensityMap, GaussianSpec, generate_target, make_gaussian_spec
from .train import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig",
    "AdaptationTrace",
    "AnnotatedImage",
    "AnnotationValidationError",
    "Box",
    "CheckpointError",
    "ConfigurationError",
    "CorrelationStack",
    "CountingDataset",
    "CountingModel",
    "DatasetLoadError",
    "DatasetSplit",
    "DegenerateExemplarError",
    "DensityHead",
    "DensityMap",
    "EmptyAnnotationError",
    "EvalReport",
    "FamcountError",
    "GaussianSpec",
    "ImageTooSmallError",
    "KernelTooLargeError",
    "OutOfBoundsError",
    "PipelineConfig",
    "Point",
    "SplitIntegrityError",
    "TrainConfig",
    "TrainResult",
    "adapt_and_count",
    "adaptation_loss",
    "baseline_predict",
    "baseline_report",
    "build_model",
    "correlate",
    "count",
    "evaluate_split",
    "generate_target",
    "init_head",
    "load_checkpoint",
    "load_dataset",
    "mae",
    "make_gaussian_spec",
    "make_synthetic_suite",
    "min_count_loss",
    "mse_loss",
    "perturbation_loss",
    "perturbation_target",
    "predict_image",
    "predict_no_adapt",
    "resize_for_model",
    "rmse",
    "run_component_ablation",
    "save_checkpoint",
    "save_dataset",
    "train",
]
