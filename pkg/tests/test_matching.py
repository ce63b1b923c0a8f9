"""Correlation matcher tests.

The constant-feature oracle: if every feature value is a constant v and
the kernel is all w, an interior output cell of the size-preserving
correlation is (v * w * C * kh * kw) / (C * kh * kw) = v * w.
"""

import numpy as np
import pytest
import torch

from famcount.data import Box
from famcount.errors import KernelTooLargeError
from famcount.features import (
    ExemplarKernelSet,
    FeaturePyramid,
    extract_exemplar_features,
    extract_image_features,
)
from famcount.matching import CorrelationStack, _correlate_one, correlate


def make_pyramid(h8=12, w8=16, c3=4, c4=8, fill3=None, fill4=None, seed=0):
    rng = np.random.default_rng(seed)
    f3 = fill3 if fill3 is not None else rng.normal(size=(c3, h8, w8))
    f4 = fill4 if fill4 is not None else rng.normal(size=(c4, h8 // 2, w8 // 2))
    return FeaturePyramid(
        levels={3: torch.tensor(f3, dtype=torch.float32),
                4: torch.tensor(f4, dtype=torch.float32)},
        strides={3: 8, 4: 16},
        image_size=(h8 * 8, w8 * 8),
    )


def kernels_from(pyr, boxes, scales=(0.9, 1.0, 1.1)):
    return extract_exemplar_features(pyr, boxes, scales=scales)


class TestCorrelateOne:
    def test_constant_oracle_interior(self):
        c, h, w = 3, 10, 12
        level = torch.full((c, h, w), 2.0)
        kernel = torch.full((c, 3, 3), 0.5)
        out = _correlate_one(level, kernel)
        assert out.shape == (h, w)
        # interior cells: full overlap -> v*w = 1.0 after normalization
        assert torch.allclose(out[1:-1, 1:-1], torch.ones(h - 2, w - 2))
        # corner cell: only 4 of 9 kernel positions overlap
        assert out[0, 0].item() == pytest.approx(2.0 * 0.5 * 4 / 9)

    def test_identity_kernel_picks_dot_product(self):
        rng = np.random.default_rng(5)
        level = torch.tensor(rng.normal(size=(6, 9, 9)), dtype=torch.float64)
        kernel = level[:, 4:5, 4:5].clone()  # 1x1 kernel from the center cell
        out = _correlate_one(level, kernel)
        expect = float((level[:, 4, 4] * kernel[:, 0, 0]).sum()) / 6.0
        assert out[4, 4].item() == pytest.approx(expect, rel=1e-12)

    def test_size_preserved_even_kernel(self):
        level = torch.zeros(2, 8, 10)
        for kh, kw in [(2, 2), (2, 4), (4, 2), (3, 4)]:
            out = _correlate_one(level, torch.zeros(2, kh, kw))
            assert out.shape == (8, 10)

    def test_kernel_too_large(self):
        level = torch.zeros(2, 5, 5)
        with pytest.raises(KernelTooLargeError):
            _correlate_one(level, torch.zeros(2, 6, 3))

    def test_normalization_constant(self):
        # all-ones level and kernel: interior value must be exactly 1/(C kh kw) * C kh kw = 1
        level = torch.ones(5, 9, 9)
        kernel = torch.ones(5, 3, 3)
        out = _correlate_one(level, kernel)
        assert out[4, 4].item() == pytest.approx(1.0, rel=1e-6)


class TestCorrelate:
    def test_channel_count_and_order(self):
        pyr = make_pyramid()
        ks = kernels_from(pyr, [Box(10, 10, 40, 40)])
        stack = correlate(pyr, ks)
        assert stack.values.shape == (6, 12, 16)
        assert stack.blocks == (3, 4)
        assert stack.scales == (0.9, 1.0, 1.1)

    def test_block4_upsampled_to_block3_grid(self):
        pyr = make_pyramid(h8=10, w8=14)
        ks = kernels_from(pyr, [Box(8, 8, 50, 50)])
        stack = correlate(pyr, ks)
        assert stack.values.shape[1:] == (10, 14)

    def test_exemplar_permutation_bitwise_invariant(self):
        pyr = make_pyramid(seed=9)
        boxes = [Box(8, 8, 40, 40), Box(50, 30, 90, 70), Box(20, 50, 60, 90)]
        a = correlate(pyr, kernels_from(pyr, boxes)).values
        for perm in ([2, 0, 1], [1, 2, 0], [2, 1, 0]):
            b = correlate(pyr, kernels_from(pyr, [boxes[i] for i in perm])).values
            assert torch.equal(a, b)

    def test_single_exemplar_no_average(self):
        pyr = make_pyramid(seed=2)
        box = Box(16, 16, 48, 48)
        ks = kernels_from(pyr, [box], scales=(1.0,))
        stack = correlate(pyr, ks)
        direct = _correlate_one(pyr.levels[3], ks.kernels[(0, 3, 1.0)])
        assert torch.equal(stack.values[0], direct)

    def test_mean_over_exemplars(self):
        pyr = make_pyramid(seed=3)
        boxes = [Box(8, 8, 40, 40), Box(48, 48, 80, 80)]
        ks = kernels_from(pyr, boxes, scales=(1.0,))
        stack = correlate(pyr, ks)
        m0 = _correlate_one(pyr.levels[3], ks.kernels[(0, 3, 1.0)])
        m1 = _correlate_one(pyr.levels[3], ks.kernels[(1, 3, 1.0)])
        torch.testing.assert_close(stack.values[0], (m0 + m1) / 2)

    def test_from_real_backbone(self, tiny_model):
        from .conftest import make_image

        img = make_image(seed=21)
        pyr = extract_image_features(tiny_model.backbone, img.pixels)
        ks = extract_exemplar_features(pyr, img.exemplars)
        stack = correlate(pyr, ks)
        assert stack.values.shape == (6, 96 // 8, 128 // 8)
        assert torch.isfinite(stack.values).all()


class TestCorrelationStack:
    def test_channels_property(self):
        s = CorrelationStack(values=torch.zeros(6, 4, 4))
        assert s.channels == 6
