"""Dataset model, validation, disk round-trip, and resize tests."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from famcount.data import (
    AnnotatedImage,
    Box,
    DatasetSplit,
    Point,
    check_split_disjointness,
    load_dataset,
    resize_for_model,
    save_dataset,
    validate_image,
)
from famcount.errors import (
    AnnotationValidationError,
    DatasetLoadError,
    DegenerateExemplarError,
    SplitIntegrityError,
)
from .conftest import make_image


class TestGeometry:
    def test_point_scaled(self):
        assert Point(4.0, 6.0).scaled(0.5, 2.0) == Point(2.0, 12.0)

    def test_box_dims(self):
        b = Box(1, 2, 5, 10)
        assert (b.width, b.height) == (4, 8)

    def test_box_contains_inclusive(self):
        b = Box(0, 0, 10, 10)
        assert b.contains(Point(0, 0))
        assert b.contains(Point(10, 10))
        assert not b.contains(Point(10.01, 5))


class TestValidation:
    def test_valid_image_passes(self):
        validate_image(make_image())

    def test_dot_outside_frame(self):
        img = make_image()
        img.dots.append(Point(999.0, 10.0))
        with pytest.raises(AnnotationValidationError) as exc:
            validate_image(img)
        assert "dots[" in str(exc.value)

    def test_box_corners_unordered(self):
        img = make_image()
        img.exemplars.append(Box(50, 50, 40, 60))
        with pytest.raises(AnnotationValidationError):
            validate_image(img)

    def test_box_outside_frame(self):
        img = make_image()
        img.exemplars.append(Box(100, 80, 300, 90))
        with pytest.raises(AnnotationValidationError):
            validate_image(img)

    def test_box_touching_far_edge_ok(self):
        img = make_image()
        img.exemplars = [Box(float(img.width - 10), 0.0, float(img.width), 10.0)]
        img.dots.append(Point(img.width - 5.0, 5.0))
        validate_image(img)

    def test_fewer_dots_than_boxes(self):
        img = make_image(n_dots=6, n_boxes=2)
        img.dots = img.dots[:1]
        with pytest.raises(AnnotationValidationError):
            validate_image(img)

    def test_empty_box_warns_not_raises(self, caplog):
        img = make_image()
        img.exemplars.append(Box(0.0, 0.0, 1.0, 1.0))  # corner box, no dot inside
        with caplog.at_level("WARNING"):
            validate_image(img)
        assert any("contains no dot" in r.message for r in caplog.records)


class TestSplitDisjointness:
    def test_disjoint_ok(self):
        splits = {
            "train": DatasetSplit("train", ["a"], {"cats"}),
            "val": DatasetSplit("val", ["b"], {"dogs"}),
        }
        check_split_disjointness(splits)

    def test_shared_category_raises(self):
        splits = {
            "train": DatasetSplit("train", ["a"], {"cats", "mugs"}),
            "test": DatasetSplit("test", ["b"], {"mugs"}),
        }
        with pytest.raises(SplitIntegrityError) as exc:
            check_split_disjointness(splits)
        assert "mugs" in str(exc.value)


class TestDiskRoundTrip:
    def test_save_then_load(self, tmp_path):
        imgs = [make_image(f"img-{i}", seed=i, n_dots=5, n_boxes=2) for i in range(3)]
        for i, img in enumerate(imgs):
            img.category = f"cat-{i}"
        save_dataset(tmp_path, imgs, {"train": ["img-0", "img-1"], "val": ["img-2"], "test": []})
        ds = load_dataset(tmp_path)
        assert len(ds) == 3
        assert [i.id for i in ds.split_images("train")] == ["img-0", "img-1"]
        got = ds.images["img-1"]
        want = imgs[1]
        assert got.width == want.width and got.height == want.height
        assert len(got.dots) == len(want.dots)
        assert got.dots[0].x == pytest.approx(want.dots[0].x)
        np.testing.assert_array_equal(got.pixels, want.pixels)  # png is lossless

    def test_deterministic_annotation_bytes(self, tmp_path):
        imgs = [make_image("a", seed=3)]
        save_dataset(tmp_path / "one", imgs, {"train": ["a"], "val": [], "test": []})
        save_dataset(tmp_path / "two", imgs, {"train": ["a"], "val": [], "test": []})
        a = (tmp_path / "one" / "annotations.json").read_bytes()
        b = (tmp_path / "two" / "annotations.json").read_bytes()
        assert a == b

    def test_missing_annotations_file(self, tmp_path):
        with pytest.raises(DatasetLoadError) as exc:
            load_dataset(tmp_path)
        assert "annotations.json" in str(exc.value)

    def test_missing_image_file(self, tmp_path):
        imgs = [make_image("a", seed=1)]
        save_dataset(tmp_path, imgs, {"train": ["a"], "val": [], "test": []})
        (tmp_path / "images" / "a.png").unlink()
        with pytest.raises(DatasetLoadError) as exc:
            load_dataset(tmp_path)
        assert "a" in str(exc.value)

    def test_split_references_unknown_id(self, tmp_path):
        imgs = [make_image("a", seed=1)]
        save_dataset(tmp_path, imgs, {"train": ["a", "ghost"], "val": [], "test": []})
        with pytest.raises(DatasetLoadError) as exc:
            load_dataset(tmp_path)
        assert "ghost" in str(exc.value)

    def test_undecodable_image(self, tmp_path):
        imgs = [make_image("a", seed=1)]
        save_dataset(tmp_path, imgs, {"train": ["a"], "val": [], "test": []})
        (tmp_path / "images" / "a.png").write_bytes(b"not a png at all")
        with pytest.raises(DatasetLoadError):
            load_dataset(tmp_path)

    def test_malformed_record(self, tmp_path):
        imgs = [make_image("a", seed=1)]
        save_dataset(tmp_path, imgs, {"train": ["a"], "val": [], "test": []})
        ann = json.loads((tmp_path / "annotations.json").read_text())
        del ann["a"]["category"]
        (tmp_path / "annotations.json").write_text(json.dumps(ann))
        with pytest.raises(AnnotationValidationError):
            load_dataset(tmp_path)


class TestResizeForModel:
    def test_height_exact_width_multiple_of_8(self):
        img = make_image(width=500, height=375)
        out = resize_for_model(img, 384)
        assert out.height == 384
        assert out.width % 8 == 0
        # 500 * 384/375 = 512 exactly
        assert out.width == 512

    def test_identity_short_circuit(self):
        img = make_image(width=128, height=96)
        out = resize_for_model(img, 96)
        assert out is img

    def test_idempotent(self):
        img = make_image(width=500, height=375)
        once = resize_for_model(img, 384)
        twice = resize_for_model(once, 384)
        assert twice is once

    def test_dots_and_boxes_scaled(self):
        img = make_image(width=256, height=192, n_dots=4, n_boxes=1)
        out = resize_for_model(img, 96)  # exactly half
        assert out.width == 128
        for p_in, p_out in zip(img.dots, out.dots):
            assert p_out.x == pytest.approx(p_in.x / 2)
            assert p_out.y == pytest.approx(p_in.y / 2)
        b_in, b_out = img.exemplars[0], out.exemplars[0]
        assert b_out.x2 == pytest.approx(b_in.x2 / 2)

    def test_degenerate_box_raises(self):
        img = make_image(width=1024, height=768)
        img.exemplars = [Box(10.0, 10.0, 11.5, 11.5)]
        with pytest.raises(DegenerateExemplarError):
            resize_for_model(img, 64)

    def test_min_height(self):
        with pytest.raises(ValueError):
            resize_for_model(make_image(), 32)

    @settings(max_examples=30, deadline=None)
    @given(
        w=st.integers(64, 1200),
        h=st.integers(64, 900),
        target=st.integers(64, 512),
    )
    def test_resize_properties(self, w, h, target):
        rng = np.random.default_rng(0)
        pixels = rng.integers(0, 255, size=(h, w, 3), dtype=np.uint8)
        img = AnnotatedImage("p", w, h, [], [], "c", pixels=pixels)
        out = resize_for_model(img, target)
        assert out.height == target
        assert out.width % 8 == 0
        assert out.width >= 8
        again = resize_for_model(out, target)
        assert again is out  # idempotent


class TestLazyPixels:
    def test_from_disk(self, tmp_path):
        arr = np.full((16, 24, 3), 99, dtype=np.uint8)
        p = tmp_path / "x.png"
        Image.fromarray(arr).save(p)
        img = AnnotatedImage("x", 24, 16, [], [], "c", path=p)
        np.testing.assert_array_equal(img.pixels, arr)

    def test_needs_path_or_pixels(self):
        with pytest.raises(ValueError):
            AnnotatedImage("x", 8, 8, [], [], "c")

    def test_with_boxes_keeps_source(self):
        img = make_image()
        other = img.with_boxes([Box(0, 0, 8, 8)])
        assert len(other.exemplars) == 1
        assert other.dots == img.dots
        np.testing.assert_array_equal(other.pixels, img.pixels)
