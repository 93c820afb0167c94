"""
Tests du champ angulaire de Gram et de ses exports.
"""

import numpy as np
import pytest
from pyts.image import GramianAngularField

from app.core.exceptions import DomainError, ShapeError
from app.services.gaf_service import (
    GafService,
    export_matrix_csv,
    export_pgm,
    gaf_batch,
    gaf_closed_form,
    gaf_transform,
    to_pixels,
)


def test_two_values():
    np.testing.assert_allclose(gaf_transform([3.0, 7.0]).g, [[-1.0, 0.0], [0.0, 1.0]], atol=1e-15)


def test_three_values():
    img = gaf_transform([0.0, 0.5, 1.0])
    assert img.g[0, 1] == pytest.approx(-np.sqrt(3.0) / 2.0, abs=1e-12)
    assert (img.data_min, img.data_max) == (0.0, 1.0)


def test_constant_sequence():
    with pytest.raises(DomainError):
        gaf_transform(np.full(5, 2.0))
    img = gaf_transform(np.full(5, 2.0), strict=False)
    assert img.degenerate
    np.testing.assert_allclose(img.g, np.full((5, 5), -0.5), atol=1e-12)


def test_invalid_inputs():
    with pytest.raises(ShapeError):
        gaf_transform([1.0])
    with pytest.raises(ShapeError):
        gaf_transform(np.zeros((2, 2)))
    with pytest.raises(DomainError):
        gaf_transform([0.0, np.inf])


def check_properties(d: np.ndarray) -> None:
    img = gaf_transform(d)
    assert np.array_equal(img.g, img.g.T)
    assert np.all(np.abs(img.g) <= 1.0)
    assert np.all((img.theta >= 0.0) & (img.theta <= np.pi / 2))
    x = np.cos(img.theta)
    np.testing.assert_allclose(np.diag(img.g), 2.0 * x * x - 1.0, atol=1e-12)
    np.testing.assert_allclose(img.g, gaf_closed_form(d), atol=1e-12)


def test_properties_over_random_sequences():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        check_properties(rng.normal(size=rng.integers(2, 20)))


def test_properties_at_input_length():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        check_properties(rng.normal(size=64))


def test_increasing_sequence_signature():
    img = gaf_transform(np.linspace(1.0, 50.0, 64) ** 1.3)
    assert img.g[0, 0] == -1.0
    assert img.g[-1, -1] == 1.0


def test_batch(small_train):
    images = gaf_batch(small_train.loads())
    assert images.shape == (8, 16, 16)
    np.testing.assert_array_equal(images[2], gaf_transform(small_train[2].load).g)
    with pytest.raises(ShapeError):
        gaf_batch(np.zeros(4))


def test_pixels():
    np.testing.assert_array_equal(to_pixels(np.array([-1.0, 0.0, 1.0])), [0, 128, 255])


def test_pgm_size(tmp_path):
    img = gaf_transform(np.linspace(0.0, 1.0, 64))
    path = export_pgm(img, tmp_path / "g.pgm")
    content = path.read_bytes()
    header = b"P5\n64 64\n255\n"
    assert content.startswith(header)
    assert len(content) == len(header) + 4096
    assert content[len(header)] == 0  # g[0][0] = -1


def test_matrix_csv(tmp_path):
    img = gaf_transform([0.0, 0.25, 1.0])
    path = export_matrix_csv(img, tmp_path / "g.csv")
    values = np.loadtxt(path, delimiter=",")
    np.testing.assert_array_equal(values, img.g)


def test_unknown_format(tmp_path):
    with pytest.raises(DomainError):
        GafService().export(gaf_transform([0.0, 1.0]), tmp_path / "g.png", fmt="png")


def test_matches_pyts_summation_field():
    # pyts sans remise à l'échelle prend arccos(x) pour x dans [-1, 1]: on lui passe x~ dans [0, 1]
    rng = np.random.default_rng(3)
    for length in (12, 64):
        d = rng.normal(size=length)
        x = (d - d.min()) / (d.max() - d.min())
        reference = GramianAngularField(method="summation", sample_range=None).fit_transform(x[None])[0]
        np.testing.assert_allclose(gaf_transform(d).g, reference, atol=1e-10)
