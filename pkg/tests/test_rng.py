"""
Tests du générateur xoshiro256** et de ses flux dérivés.
"""

import numpy as np
import pytest

from app.core.exceptions import DomainError
from app.core.rng import MASK64, Rng, splitmix64


def test_same_seed_same_stream():
    a, b = Rng(42), Rng(42)
    assert [a.next_u64() for _ in range(10_000)] == [b.next_u64() for _ in range(10_000)]


@pytest.mark.slow
def test_same_seed_same_million_draws():
    a, b = Rng(7), Rng(7)
    for _ in range(1_000_000):
        assert a.next_u64() == b.next_u64()


def test_different_seeds_differ():
    assert [Rng(1).next_u64() for _ in range(4)] != [Rng(2).next_u64() for _ in range(4)]


def test_splitmix64_known_value():
    # Première sortie de splitmix64 pour l'état 0
    _, out = splitmix64(0)
    assert out == 0xE220A8397B1DCDAF


def test_outputs_are_64_bit():
    rng = Rng(123)
    for _ in range(1000):
        assert 0 <= rng.next_u64() <= MASK64


def test_random_in_unit_interval():
    rng = Rng(5)
    values = [rng.random() for _ in range(5000)]
    assert min(values) >= 0.0 and max(values) < 1.0
    assert abs(np.mean(values) - 0.5) < 0.02


def test_log_uniform_bounds():
    rng = Rng(9)
    for _ in range(2000):
        assert 0.1 <= rng.log_uniform(0.1, 0.4) <= 0.4
    with pytest.raises(DomainError):
        rng.log_uniform(0.0, 1.0)


def test_randbelow():
    rng = Rng(11)
    assert {rng.randbelow(3) for _ in range(300)} == {0, 1, 2}
    with pytest.raises(DomainError):
        rng.randbelow(0)


def test_permutation_is_a_permutation():
    order = Rng(3).permutation(50)
    assert sorted(order) == list(range(50))
    assert order == Rng(3).permutation(50)


def test_split_depends_on_seed_only():
    parent = Rng(17)
    first = parent.split(4).next_u64()
    for _ in range(10):
        parent.next_u64()
    assert parent.split(4).next_u64() == first
    assert Rng(17).split(5).next_u64() != first


def test_numpy_generator_is_reproducible():
    a = Rng(21).numpy().random(8)
    b = Rng(21).numpy().random(8)
    np.testing.assert_array_equal(a, b)
