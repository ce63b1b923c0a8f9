"""Data model and disk format for dot-annotated counting datasets.

A dataset root holds ``annotations.json`` (per-image dots, exemplar boxes,
category), ``splits.json`` (train/val/test image ids), and an ``images/``
directory with one jpg or png per image id.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import (
    AnnotationValidationError,
    DatasetLoadError,
    DegenerateExemplarError,
    SplitIntegrityError,
)

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png")


@dataclass(frozen=True)
class Point:
    """Dot annotation: the approximate center of one object instance."""

    x: float
    y: float

    def scaled(self, sx: float, sy: float) -> "Point":
        return Point(self.x * sx, self.y * sy)


@dataclass(frozen=True)
class Box:
    """Axis-aligned exemplar bounding box in pixel coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def scaled(self, sx: float, sy: float) -> "Box":
        return Box(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)

    def contains(self, p: Point) -> bool:
        return self.x1 <= p.x <= self.x2 and self.y1 <= p.y <= self.y2


class AnnotatedImage:
    """An image plus its dot annotations and exemplar boxes.

    Pixels are loaded lazily from ``path`` unless the instance was built
    around an in-memory array. The ground-truth count is ``len(dots)``.
    """

    def __init__(
        self,
        image_id: str,
        width: int,
        height: int,
        dots: Sequence[Point],
        exemplars: Sequence[Box],
        category: str,
        path: Path | None = None,
        pixels: np.ndarray | None = None,
    ):
        if path is None and pixels is None:
            raise ValueError("AnnotatedImage needs a path or an in-memory pixel array")
        self.id = image_id
        self.width = int(width)
        self.height = int(height)
        self.dots = list(dots)
        self.exemplars = list(exemplars)
        self.category = category
        self.path = path
        self._pixels = pixels

    @property
    def count(self) -> int:
        return len(self.dots)

    @property
    def pixels(self) -> np.ndarray:
        """H x W x 3 uint8 array; decoded from disk on each access."""
        if self._pixels is not None:
            return self._pixels
        with Image.open(self.path) as im:
            return np.asarray(im.convert("RGB"))

    def with_boxes(self, boxes: Sequence[Box]) -> "AnnotatedImage":
        """Copy of this image with a different exemplar set."""
        return AnnotatedImage(
            self.id, self.width, self.height, self.dots, boxes,
            self.category, path=self.path, pixels=self._pixels,
        )

    def __repr__(self) -> str:
        return (
            f"AnnotatedImage(id={self.id!r}, {self.width}x{self.height}, "
            f"dots={len(self.dots)}, exemplars={len(self.exemplars)})"
        )


@dataclass
class DatasetSplit:
    """Named split; categories of distinct splits must not overlap."""

    name: str
    image_ids: list[str]
    categories: set[str] = field(default_factory=set)


@dataclass
class CountingDataset:
    """All images of a dataset root plus its three splits."""

    images: dict[str, AnnotatedImage]
    splits: dict[str, DatasetSplit]
    root: Path | None = None

    def split_images(self, name: str) -> list[AnnotatedImage]:
        return [self.images[i] for i in self.splits[name].image_ids]

    def __len__(self) -> int:
        return len(self.images)


def validate_image(img: AnnotatedImage) -> None:
    """Check the annotation invariants for one image.

    Raises AnnotationValidationError on hard violations; an exemplar box
    containing no dot only logs a warning (dots mark approximate centers,
    so a center may fall just outside a tight box).
    """
    for i, p in enumerate(img.dots):
        if not (0 <= p.x < img.width and 0 <= p.y < img.height):
            raise AnnotationValidationError(
                img.id, f"dots[{i}]", f"dot ({p.x}, {p.y}) outside {img.width}x{img.height} frame"
            )
    for i, b in enumerate(img.exemplars):
        if not (b.x1 < b.x2 and b.y1 < b.y2):
            raise AnnotationValidationError(
                img.id, f"exemplars[{i}]", f"box corners not ordered: {b}"
            )
        if b.x1 < 0 or b.y1 < 0 or b.x2 > img.width or b.y2 > img.height:
            raise AnnotationValidationError(
                img.id, f"exemplars[{i}]", f"box {b} outside {img.width}x{img.height} frame"
            )
    if len(img.dots) < len(img.exemplars):
        raise AnnotationValidationError(
            img.id, "dots", f"{len(img.dots)} dots but {len(img.exemplars)} exemplar boxes"
        )
    for i, b in enumerate(img.exemplars):
        if not any(b.contains(p) for p in img.dots):
            logger.warning("image '%s': exemplar box %d contains no dot annotation", img.id, i)


def check_split_disjointness(splits: Mapping[str, DatasetSplit]) -> None:
    names = sorted(splits)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            shared = splits[a].categories & splits[b].categories
            if shared:
                raise SplitIntegrityError(
                    f"splits '{a}' and '{b}' share categories: {sorted(shared)}"
                )


def _find_image_file(images_dir: Path, image_id: str) -> Path:
    for ext in IMAGE_EXTENSIONS:
        p = images_dir / f"{image_id}{ext}"
        if p.exists():
            return p
    raise DatasetLoadError(f"no image file for id '{image_id}' under {images_dir}")


def _parse_record(image_id: str, rec: dict, path: Path, width: int, height: int) -> AnnotatedImage:
    try:
        dots = [Point(float(x), float(y)) for x, y in rec["dots"]]
        exemplars = [Box(*(float(v) for v in coords)) for coords in rec["exemplars"]]
        category = str(rec["category"])
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationValidationError(image_id, "record", f"malformed annotation: {exc}") from exc
    return AnnotatedImage(image_id, width, height, dots, exemplars, category, path=path)


def load_dataset(root: Path | str) -> CountingDataset:
    """Load and validate a dataset root.

    Every referenced image file must exist and decode; annotations are
    checked against the data-model invariants; split categories must be
    pairwise disjoint. Pixels are left on disk (lazy handles).
    """
    root = Path(root)
    ann_path = root / "annotations.json"
    split_path = root / "splits.json"
    images_dir = root / "images"
    for p in (ann_path, split_path):
        if not p.exists():
            raise DatasetLoadError(f"missing dataset file: {p}")
    if not images_dir.is_dir():
        raise DatasetLoadError(f"missing images directory: {images_dir}")

    with open(ann_path) as f:
        raw = json.load(f)

    images: dict[str, AnnotatedImage] = {}
    for image_id, rec in raw.items():
        path = _find_image_file(images_dir, image_id)
        try:
            with Image.open(path) as im:
                width, height = im.size
        except Exception as exc:
            raise DatasetLoadError(f"cannot decode image file {path}: {exc}") from exc
        img = _parse_record(image_id, rec, path, width, height)
        validate_image(img)
        images[image_id] = img

    with open(split_path) as f:
        raw_splits = json.load(f)
    splits: dict[str, DatasetSplit] = {}
    for name in SPLIT_NAMES:
        ids = list(raw_splits.get(name, []))
        for i in ids:
            if i not in images:
                raise DatasetLoadError(f"split '{name}' references unknown image id '{i}'")
        cats = {images[i].category for i in ids}
        splits[name] = DatasetSplit(name, ids, cats)
    check_split_disjointness(splits)
    return CountingDataset(images, splits, root=root)


def save_dataset(root: Path | str, images: Iterable[AnnotatedImage],
                 splits: Mapping[str, Sequence[str]]) -> Path:
    """Write a dataset in the canonical layout. Images are stored as PNG."""
    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    ann: dict[str, dict] = {}
    for img in images:
        ann[img.id] = {
            "dots": [[p.x, p.y] for p in img.dots],
            "exemplars": [[b.x1, b.y1, b.x2, b.y2] for b in img.exemplars],
            "category": img.category,
        }
        Image.fromarray(img.pixels).save(images_dir / f"{img.id}.png")
    with open(root / "annotations.json", "w") as f:
        json.dump(ann, f, indent=1, sort_keys=True)
    with open(root / "splits.json", "w") as f:
        json.dump({name: list(ids) for name, ids in splits.items()}, f, indent=1, sort_keys=True)
    return root


def resize_for_model(img: AnnotatedImage, target_height: int) -> AnnotatedImage:
    """Aspect-preserving resize to a fixed height.

    The width is rounded to the nearest multiple of 8 (minimum 8) so both
    backbone strides divide evenly; dots and boxes are scaled by the same
    per-axis factors.
    """
    if target_height < 64:
        raise ValueError(f"target_height must be >= 64, got {target_height}")
    new_h = int(target_height)
    new_w = max(8, int(round(img.width * new_h / img.height / 8)) * 8)
    if (new_w, new_h) == (img.width, img.height):
        return img
    sx = new_w / img.width
    sy = new_h / img.height
    dots = [p.scaled(sx, sy) for p in img.dots]
    boxes = []
    for b in img.exemplars:
        sb = b.scaled(sx, sy)
        if sb.width < 1.0 or sb.height < 1.0:
            raise DegenerateExemplarError(
                f"image '{img.id}': box {b} collapses to {sb.width:.2f}x{sb.height:.2f} "
                f"at scale ({sx:.4f}, {sy:.4f})"
            )
        boxes.append(sb)
    pixels = np.asarray(
        Image.fromarray(img.pixels).resize((new_w, new_h), Image.BILINEAR)
    )
    return AnnotatedImage(img.id, new_w, new_h, dots, boxes, img.category, pixels=pixels)


def import_fsc147(
    annotation_file: Path | str,
    split_file: Path | str,
    images_dir: Path | str,
    out_root: Path | str,
    classes_file: Path | str | None = None,
) -> Path:
    """Best-effort import of the public FSC-147 annotation files.

    The public format keys records by image filename and stores exemplar
    boxes as 4-corner lists; corners are reduced to axis-aligned boxes and
    out-of-frame coordinates are clamped into the frame. ``classes_file``
    (lines of ``<filename>\\t<category>``) supplies categories; without it
    each split gets a synthetic per-split category so disjointness holds.
    """
    annotation_file, split_file = Path(annotation_file), Path(split_file)
    images_dir, out_root = Path(images_dir), Path(out_root)
    with open(annotation_file) as f:
        raw = json.load(f)
    with open(split_file) as f:
        raw_splits = json.load(f)

    categories: dict[str, str] = {}
    if classes_file is not None:
        for line in Path(classes_file).read_text().splitlines():
            if line.strip():
                name, cat = line.split("\t", 1)
                categories[name] = cat.strip()

    split_of: dict[str, str] = {}
    for name in SPLIT_NAMES:
        for fname in raw_splits.get(name, []):
            split_of[fname] = name

    out_root.mkdir(parents=True, exist_ok=True)
    out_images = out_root / "images"
    if not out_images.exists():
        try:
            os.symlink(images_dir.resolve(), out_images, target_is_directory=True)
        except OSError:
            shutil.copytree(images_dir, out_images)

    ann: dict[str, dict] = {}
    splits: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    n_clamped = 0
    for fname, rec in raw.items():
        if fname not in split_of:
            continue
        image_id = Path(fname).stem
        src = images_dir / fname
        if not src.exists():
            logger.warning("skipping '%s': image file missing", fname)
            continue
        with Image.open(src) as im:
            width, height = im.size
        dots = []
        for x, y in rec.get("points", []):
            cx = min(max(float(x), 0.0), width - 1e-3)
            cy = min(max(float(y), 0.0), height - 1e-3)
            if (cx, cy) != (float(x), float(y)):
                n_clamped += 1
            dots.append([cx, cy])
        boxes = []
        for corners in rec.get("box_examples_coordinates", []):
            xs = [float(c[0]) for c in corners]
            ys = [float(c[1]) for c in corners]
            x1 = min(max(min(xs), 0.0), width - 1.0)
            y1 = min(max(min(ys), 0.0), height - 1.0)
            x2 = max(min(max(xs), float(width)), x1 + 1.0)
            y2 = max(min(max(ys), float(height)), y1 + 1.0)
            boxes.append([x1, y1, x2, y2])
        split = split_of[fname]
        ann[image_id] = {
            "dots": dots,
            "exemplars": boxes,
            "category": categories.get(fname, f"unlabeled-{split}"),
        }
        splits[split].append(image_id)

    if n_clamped:
        logger.warning("clamped %d out-of-frame dot coordinates during import", n_clamped)
    with open(out_root / "annotations.json", "w") as f:
        json.dump(ann, f, indent=1, sort_keys=True)
    with open(out_root / "splits.json", "w") as f:
        json.dump(splits, f, indent=1, sort_keys=True)
    return out_root
