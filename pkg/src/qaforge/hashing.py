"""Portable 64-bit hashing and seeded PRNG primitives.

Everything here is bit-exact across platforms: all arithmetic is unsigned
64-bit (mod 2^64). These primitives underpin record ids, MinHash sketches,
deterministic embeddings, and every seeded sampling decision in the
pipeline, so they must never change once corpora have been built.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def hash64(data: bytes | str) -> int:
    """FNV-1a 64-bit hash. Strings are hashed as UTF-8."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    state = FNV_OFFSET_BASIS
    for byte in data:
        state ^= byte
        state = (state * FNV_PRIME) & MASK64
    return state


def mix64(z: int) -> int:
    """SplitMix64 finalizer: strong avalanche on a 64-bit value."""
    z &= MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


def to_unit_interval(z: int) -> float:
    """Map a uint64 to [0, 1) using the top 53 bits."""
    return (z >> 11) * 2.0**-53


class SplitMix64:
    """Tiny seeded PRNG with a fully specified update rule.

    Used wherever the pipeline needs reproducible sampling (exemplar
    draws, mock generation, splits). Not for cryptography.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        return mix64(self._state)

    def next_float(self) -> float:
        """Uniform double in [0, 1)."""
        return to_unit_interval(self.next_u64())

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), order of selection preserved."""
        if k > n:
            raise ValueError(f"cannot draw {k} from {n}")
        pool = list(range(n))
        picked = []
        for i in range(k):
            j = i + self.next_below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
            picked.append(pool[i])
        return picked

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]
