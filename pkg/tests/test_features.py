"""
Tests de la matrice de caractéristiques (convolutions 1D/2D et passage résiduel).
"""

import numpy as np
import pytest

from app.core.exceptions import ShapeError
from app.core.gradcheck import grad_check_parameters
from app.core.tensor import Tensor
from app.models.features import (
    FeatureExtractor,
    FeatureInputs,
    build_feature_matrix,
    feature_channels,
    prepare_inputs,
)
from app.schemas.training import F2DReduction
from app.services.gaf_service import gaf_transform


def extractor(gaf_enabled: bool = True, reduction: F2DReduction = F2DReduction.ROW, seed: int = 0):
    return FeatureExtractor(np.random.default_rng(seed), gaf_enabled, reduction)


def subset_params(module, prefix: str):
    return {name: p for name, p in module.named_parameters() if name.startswith(prefix)}


def test_channel_counts():
    assert feature_channels(True) == 34
    assert feature_channels(False) == 26


def test_kernel_shapes():
    shapes = {name: p.shape for name, p in extractor().named_parameters() if name.endswith("weight")}
    assert shapes == {
        "conv1d_k3.weight": (3, 1, 8),
        "conv1d_k5.weight": (5, 1, 8),
        "conv1d_k7.weight": (7, 1, 8),
        "conv2d_1.weight": (3, 3, 1, 8),
        "conv2d_2.weight": (3, 3, 8, 8),
    }


def test_zero_input_gives_zero_features():
    out = extractor().extract_1d(np.zeros(12))
    assert out.shape == (12, 24)
    np.testing.assert_array_equal(out.data, np.zeros((12, 24)))


@pytest.mark.parametrize("length", [8, 13, 64])
def test_same_length(length):
    ex = extractor()
    assert ex.extract_1d(np.linspace(0, 1, length)).shape == (length, 24)
    g = gaf_transform(np.linspace(0, 1, length)).g
    assert ex.extract_2d(g).shape == (length, 8)


def test_extract_1d_gradients():
    ex = extractor(seed=1)
    d = Tensor(np.random.default_rng(2).uniform(size=9))
    weights = Tensor(np.random.default_rng(3).normal(size=(9, 24)))
    errors = grad_check_parameters(lambda: (ex.extract_1d(d) * weights).sum(), subset_params(ex, "conv1d"))
    assert max(errors.values()) < 1e-4


def test_extract_2d_gradients():
    ex = extractor(seed=4)
    g = gaf_transform(np.random.default_rng(5).normal(size=6)).g
    weights = Tensor(np.random.default_rng(6).normal(size=(6, 8)))
    errors = grad_check_parameters(lambda: (ex.extract_2d(g) * weights).sum(), subset_params(ex, "conv2d"))
    assert max(errors.values()) < 1e-4


def test_constant_image_rows_identical():
    out = extractor().extract_2d(np.zeros((10, 10))).data
    np.testing.assert_array_equal(out, np.broadcast_to(out[0], out.shape))
    # Le padding nul ne touche que les deux premières et deux dernières lignes
    inner = extractor().extract_2d(np.full((10, 10), 0.3)).data[2:-2]
    np.testing.assert_allclose(inner, np.broadcast_to(inner[0], inner.shape), atol=1e-12)


def test_global_reduction_replicates():
    ex = extractor(reduction=F2DReduction.GLOBAL)
    out = ex.extract_2d(gaf_transform(np.linspace(0, 1, 7) ** 2).g).data
    assert out.shape == (7, 8)
    for row in out:
        np.testing.assert_array_equal(row, out[0])


def test_extract_2d_errors():
    with pytest.raises(ShapeError):
        extractor().extract_2d(np.zeros((4, 5)))
    with pytest.raises(ShapeError):
        extractor(gaf_enabled=False).extract_2d(np.zeros((4, 4)))


class TestFeatureMatrix:
    def test_layout(self, small_train):
        pair = small_train[0]
        ex = extractor()
        fm = build_feature_matrix(pair, gaf_transform(pair.load), small_train.norm_stats, ex)
        assert fm.m.shape == (16, 34)
        assert fm.c_total == 34
        np.testing.assert_array_equal(fm.m.data[:, 0], small_train.norm_stats.normalize_load(pair.load))
        np.testing.assert_array_equal(fm.m.data[:, 1], np.full(16, pair.spec.t / 4.0))
        np.testing.assert_array_equal(fm.m.data[:, 2:26], ex.extract_1d(fm.m.data[:, 0]).data)

    def test_baseline_layout(self, small_train):
        fm = build_feature_matrix(small_train[1], None, small_train.norm_stats, extractor(gaf_enabled=False))
        assert fm.m.shape == (16, 26)
        assert fm.f2d_channels == 0

    def test_channel_order_matters(self, small_train):
        pair = small_train[2]
        fm = build_feature_matrix(pair, gaf_transform(pair.load), small_train.norm_stats, extractor()).m.data
        swapped = np.concatenate([fm[:, :2], fm[:, 26:], fm[:, 2:26]], axis=1)
        assert not np.array_equal(fm, swapped)

    def test_image_size_mismatch(self, small_train):
        pair = small_train[0]
        with pytest.raises(ShapeError):
            build_feature_matrix(pair, gaf_transform(np.arange(8.0)), small_train.norm_stats, extractor())
        with pytest.raises(ShapeError):
            build_feature_matrix(pair, None, small_train.norm_stats, extractor())

    def test_raw_channel_has_no_parameter_gradient(self, small_train):
        ex = extractor()
        inputs = prepare_inputs(small_train.samples[:2], small_train.norm_stats)
        fm = ex(inputs)
        fm.m[:, :, 0].sum().backward()
        for name, p in ex.named_parameters():
            assert not np.any(p.grad), name


class TestPrepareInputs:
    def test_batch(self, small_train):
        inputs = prepare_inputs(small_train.samples, small_train.norm_stats)
        assert len(inputs) == 8
        assert inputs.images.shape == (8, 16, 16)
        part = inputs.subset([3, 1])
        np.testing.assert_array_equal(part.load[0], inputs.load[3])
        np.testing.assert_array_equal(part.images[1], inputs.images[1])

    def test_without_gaf(self, small_train):
        assert prepare_inputs(small_train.samples, small_train.norm_stats, gaf_enabled=False).images is None

    def test_images_are_gaf_of_raw_load(self, small_train):
        inputs = prepare_inputs(small_train.samples[:3], small_train.norm_stats)
        for position in range(3):
            expected = gaf_transform(small_train[position].load, strict=False).g
            np.testing.assert_array_equal(inputs.images[position], expected)

    def test_empty(self, small_train):
        with pytest.raises(ShapeError):
            prepare_inputs([], small_train.norm_stats)

    def test_missing_images(self, small_train):
        inputs = prepare_inputs(small_train.samples[:2], small_train.norm_stats, gaf_enabled=False)
        with pytest.raises(ShapeError):
            extractor()(FeatureInputs(inputs.load, inputs.thickness, None))
