"""Synthetic blob-counting dataset generator.

Images are textured backgrounds scattered with repeated shapes (discs,
squares, ellipses) on a jittered grid, one dot per shape center and
three exemplar boxes that each contain exactly one shape. Shape names
are baked into the category so train/val/test categories never overlap.
Everything is driven by one seeded generator, so the same seed always
produces byte-identical datasets.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .data import (
    AnnotatedImage,
    Box,
    CountingDataset,
    DatasetSplit,
    Point,
    load_dataset,
    save_dataset,
)

logger = logging.getLogger(__name__)

SHAPES = ("disc", "square", "ellipse")
# per-shape RGB tint of the foreground blobs
_TINTS = {"disc": (235, 200, 120), "square": (130, 215, 235), "ellipse": (225, 140, 200)}


def _texture(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Low-contrast background: smooth gradient plus grain."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    base = 70.0 + 18.0 * (xx / width) + 12.0 * (yy / height)
    grain = rng.normal(0.0, 4.0, size=(height, width))
    img = np.repeat((base + grain)[:, :, None], 3, axis=2)
    return img


def _stamp(img: np.ndarray, shape: str, cx: float, cy: float, radius: float,
           tint: tuple[int, int, int], gain: float) -> None:
    h, w = img.shape[:2]
    y0 = max(0, int(cy - radius - 2))
    y1 = min(h, int(cy + radius + 3))
    x0 = max(0, int(cx - radius - 2))
    x1 = min(w, int(cx + radius + 3))
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    if shape == "disc":
        mask = np.hypot(xx - cx, yy - cy) <= radius
    elif shape == "square":
        mask = (np.abs(xx - cx) <= radius) & (np.abs(yy - cy) <= radius)
    else:  # ellipse, wide and flat
        mask = ((xx - cx) / radius) ** 2 + ((yy - cy) / (radius * 0.65)) ** 2 <= 1.0
    for c in range(3):
        patch = img[y0:y1, x0:x1, c]
        patch[mask] = tint[c] * gain


def _make_image(
    rng: np.random.Generator,
    image_id: str,
    shape: str,
    category: str,
    height: int,
    width: int,
    n_objects: int,
) -> AnnotatedImage:
    radius = float(rng.uniform(5.0, 8.0))
    cell = int(np.ceil(radius * 2 + 8))
    rows = height // cell
    cols = width // cell
    while rows * cols < n_objects and radius > 3.0:
        radius -= 0.5  # dense image: shrink blobs until the jitter grid fits
        cell = int(np.ceil(radius * 2 + 8))
        rows = height // cell
        cols = width // cell
    if rows * cols < n_objects:
        raise ValueError(
            f"cannot fit {n_objects} objects of radius {radius:.1f} in {height}x{width}"
        )
    cells = rng.choice(rows * cols, size=n_objects, replace=False)
    img = _texture(rng, height, width)
    dots: list[Point] = []
    jitter = (cell - 2 * radius - 4) / 2
    for cell_idx in cells:
        r, c = divmod(int(cell_idx), cols)
        cy = (r + 0.5) * cell + rng.uniform(-jitter, jitter)
        cx = (c + 0.5) * cell + rng.uniform(-jitter, jitter)
        gain = float(rng.uniform(0.85, 1.0))
        _stamp(img, shape, cx, cy, radius, _TINTS[shape], gain)
        dots.append(Point(x=cx, y=cy))

    pick = rng.choice(n_objects, size=3, replace=False)
    margin = radius + 2.0
    boxes = []
    for i in pick:
        p = dots[int(i)]
        boxes.append(Box(
            x1=max(0.0, p.x - margin),
            y1=max(0.0, p.y - margin),
            x2=min(float(width), p.x + margin),
            y2=min(float(height), p.y + margin),
        ))
    pixels = np.clip(img, 0, 255).astype(np.uint8)
    return AnnotatedImage(
        image_id, width, height, dots, boxes, category, pixels=pixels,
    )


def make_synthetic_suite(
    out_dir: Path | str | None,
    n_train: int = 8,
    seed: int = 0,
    height: int = 192,
    width: int = 256,
    min_count: int = 7,
    max_count: int = 60,
) -> CountingDataset:
    """Generate a three-split blob dataset; saved to ``out_dir`` unless None.

    ``n_train`` counts train images; val and test each get about a quarter
    of that (at least two). Image size defaults to a multiple-of-8 frame
    so the model can consume it without resampling. Counts are drawn from
    [min_count, max_count].
    """
    if n_train < 1:
        raise ValueError("n_train must be at least 1")
    if not (1 <= min_count <= max_count):
        raise ValueError(f"bad count range [{min_count}, {max_count}]")
    rng = np.random.default_rng(seed)
    sizes = {"train": n_train, "val": max(2, n_train // 4), "test": max(2, n_train // 4)}
    images: dict[str, AnnotatedImage] = {}
    split_ids: dict[str, list[str]] = {}
    for split, n_images in sizes.items():
        ids = []
        for i in range(n_images):
            shape = SHAPES[i % len(SHAPES)]
            image_id = f"{split}-{i:03d}"
            n_objects = int(rng.integers(min_count, max_count + 1))
            img = _make_image(rng, image_id, shape, f"{shape}-{split}",
                              height, width, n_objects)
            images[image_id] = img
            ids.append(image_id)
        split_ids[split] = ids

    if out_dir is None:
        splits = {
            name: DatasetSplit(name, ids, {images[i].category for i in ids})
            for name, ids in split_ids.items()
        }
        return CountingDataset(images=images, splits=splits)
    out_dir = Path(out_dir)
    save_dataset(out_dir, images.values(), split_ids)
    logger.info("wrote synthetic dataset to %s (%s)", out_dir,
                ", ".join(f"{k}={v}" for k, v in sizes.items()))
    return load_dataset(out_dir)
