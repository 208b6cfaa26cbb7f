"""SplitMix64 generator.

Every random decision in the toolkit (document shuffles, mixture sampling,
bucket draws) goes through this generator so manifests are reproducible
bit-for-bit from a seed, independent of platform or language.
"""

from __future__ import annotations

from typing import MutableSequence, TypeVar

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")


def prng_next(state: int) -> tuple[int, int]:
    """Advance ``state`` once and return ``(value, new_state)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), state


class SplitMix64:
    """Stateful wrapper around :func:`prng_next`.

    ``draws`` counts how many 64-bit values have been consumed, which makes
    the number of random decisions in a procedure auditable.
    """

    def __init__(self, seed: int = 0):
        self.state = int(seed) & MASK64
        self.draws = 0

    def next_u64(self) -> int:
        value, self.state = prng_next(self.state)
        self.draws += 1
        return value

    def random(self) -> float:
        """Uniform float in [0, 1) computed as ``value / 2**64``."""
        return self.next_u64() / 18446744073709551616.0

    def below(self, n: int) -> int:
        """Integer in ``[0, n)`` by modulo reduction (slightly biased, by contract)."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        return self.next_u64() % n

    def shuffle(self, items: MutableSequence[T]) -> MutableSequence[T]:
        """In-place Fisher-Yates shuffle, walking from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def choice_index(self, cumulative: list[float]) -> int:
        """Pick an index against a cumulative probability vector.

        Returns the first index whose cumulative mass exceeds ``u``; rounding
        slack at the top end falls to the last index with non-zero mass.
        """
        u = self.random()
        for k, c in enumerate(cumulative):
            if u < c:
                return k
        last = len(cumulative) - 1
        while last > 0 and cumulative[last] == cumulative[last - 1]:
            last -= 1
        return last
