"""Ground-truth density maps: adaptive Gaussian smoothing of dot annotations.

The Gaussian window size for an image is the mean distance from each dot to
its nearest other dot; sigma is a quarter of the window. Each dot's kernel
is truncated at the frame boundary and renormalized to unit mass, so the
map always sums to the exact dot count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .data import Point
from .errors import EmptyAnnotationError, OutOfBoundsError

# Fixed-size fallback for a single dot, matching the 15x15 window convention
# used when no neighbor distance is available.
SINGLE_DOT_WINDOW = 15.0
WINDOW_MIN = 3
WINDOW_MAX = 129


@dataclass
class DensityMap:
    """Non-negative H x W grid whose total mass is the object count."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError(f"density map must be 2-D, got shape {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def total(self) -> float:
        return float(np.sum(self.values, dtype=np.float64))


@dataclass(frozen=True)
class GaussianSpec:
    """Odd window size in pixels and its sigma (always window / 4)."""

    window: int
    sigma: float


def mean_nn_distance(dots: Sequence[Point]) -> float:
    """Mean Euclidean distance from each dot to its nearest other dot."""
    if len(dots) == 0:
        raise EmptyAnnotationError("need at least one dot")
    if len(dots) == 1:
        return SINGLE_DOT_WINDOW
    pts = np.array([[p.x, p.y] for p in dots], dtype=np.float64)
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=2)
    return float(np.mean(dist[:, 1]))


def make_gaussian_spec(dots: Sequence[Point]) -> GaussianSpec:
    """Window = rounded mean nearest-neighbor distance, forced odd, clamped."""
    w = int(round(mean_nn_distance(dots)))
    if w % 2 == 0:
        w += 1
    w = min(max(w, WINDOW_MIN), WINDOW_MAX)
    return GaussianSpec(window=w, sigma=w / 4.0)


def _base_kernel(spec: GaussianSpec) -> np.ndarray:
    r = (spec.window - 1) // 2
    ax = np.arange(-r, r + 1, dtype=np.float64)
    g1 = np.exp(-(ax ** 2) / (2.0 * spec.sigma ** 2))
    k = np.outer(g1, g1)
    return k / k.sum()


def generate_target(dots: Sequence[Point], height: int, width: int) -> DensityMap:
    """Place one unit-mass Gaussian per dot on an H x W grid.

    Dot coordinates are rounded half-up to the nearest pixel; kernels
    truncated by the frame edge are renormalized so each dot still
    contributes exactly 1 to the total.
    """
    spec = make_gaussian_spec(dots)
    kernel = _base_kernel(spec)
    r = (spec.window - 1) // 2
    out = np.zeros((height, width), dtype=np.float64)
    for p in dots:
        if not (0 <= p.x < width and 0 <= p.y < height):
            raise OutOfBoundsError(
                f"dot ({p.x}, {p.y}) outside {height}x{width} frame"
            )
        # half-up rounding so integer shifts of all dots shift the map exactly
        cx = min(int(np.floor(p.x + 0.5)), width - 1)
        cy = min(int(np.floor(p.y + 0.5)), height - 1)
        r0, r1 = max(0, cy - r), min(height, cy + r + 1)
        c0, c1 = max(0, cx - r), min(width, cx + r + 1)
        chunk = kernel[r0 - (cy - r): r1 - (cy - r), c0 - (cx - r): c1 - (cx - r)]
        s = chunk.sum()
        if s < 1.0:  # truncated at the border: renormalize to unit mass
            chunk = chunk / s
        out[r0:r1, c0:c1] += chunk
    return DensityMap(out)


def save_target_cache(cache_dir: Path | str, image_id: str,
                      target: DensityMap, spec: GaussianSpec) -> None:
    """Write one raw float32 row-major array file plus a metadata sidecar."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(target.values, dtype=np.float32)
    (cache_dir / f"{image_id}.f32").write_bytes(arr.tobytes())
    meta = {
        "window": spec.window,
        "sigma": spec.sigma,
        "height": target.height,
        "width": target.width,
    }
    with open(cache_dir / f"{image_id}.json", "w") as f:
        json.dump(meta, f, sort_keys=True)


def load_target_cache(cache_dir: Path | str, image_id: str) -> tuple[DensityMap, GaussianSpec]:
    cache_dir = Path(cache_dir)
    with open(cache_dir / f"{image_id}.json") as f:
        meta = json.load(f)
    raw = (cache_dir / f"{image_id}.f32").read_bytes()
    arr = np.frombuffer(raw, dtype=np.float32).reshape(meta["height"], meta["width"]).copy()
    return DensityMap(arr), GaussianSpec(window=meta["window"], sigma=meta["sigma"])
