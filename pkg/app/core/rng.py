"""
Générateur pseudo-aléatoire reproductible.

xoshiro256** initialisé par splitmix64: le flux ne dépend que de la graine,
quelle que soit la plateforme. split(index) dérive un flux enfant à partir de
la graine seule, sans consommer de tirage du parent.
"""

import math
from typing import List, MutableSequence, TypeVar

import numpy as np

from app.core.exceptions import DomainError


MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_SPLIT_MULTIPLIER = 0xD1B54A32D192ED03

T = TypeVar("T")


def splitmix64(state: int) -> tuple:
    """
    Un pas de splitmix64.

    Returns:
        (nouvel état, sortie 64 bits)
    """
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """
    Flux xoshiro256** déterministe.

    Attributes:
        seed: Graine 64 bits d'origine
    """

    __slots__ = ("seed", "_s")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        state = self.seed
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Flottant uniforme dans [0, 1) sur 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def log_uniform(self, low: float, high: float) -> float:
        """Tirage log-uniforme, borné à [low, high] malgré les arrondis."""
        if low <= 0 or high < low:
            raise DomainError(f"log_uniform: bornes invalides [{low}, {high}]")
        value = math.exp(self.uniform(math.log(low), math.log(high)))
        return min(max(value, low), high)

    def randbelow(self, n: int) -> int:
        """Entier uniforme dans [0, n) par rejet (sans biais modulo)."""
        if n <= 0:
            raise DomainError(f"randbelow: borne positive requise, reçu {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % n

    def shuffle(self, items: MutableSequence[T]) -> None:
        """Fisher-Yates en place."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> List[int]:
        order = list(range(n))
        self.shuffle(order)
        return order

    def split(self, index: int) -> "Rng":
        """Flux enfant fonction de (graine, index) uniquement."""
        _, base = splitmix64(self.seed)
        _, child = splitmix64(base ^ ((int(index) * _SPLIT_MULTIPLIER) & MASK64))
        return Rng(child)

    def numpy(self) -> np.random.Generator:
        """
        Générateur numpy (PCG64) semé par le prochain tirage du flux.
        Sert aux tirages en masse (initialisation, masques de dropout).
        """
        return np.random.Generator(np.random.PCG64(self.next_u64()))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


__all__ = ["Rng", "splitmix64", "MASK64"]
