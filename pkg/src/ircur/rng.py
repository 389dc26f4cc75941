"""Portable seeded randomness for schedules and pair generation.

SplitMix64 (Steele, Lea & Flood 2014), the seeding generator of Java's
SplittableRandom: 64-bit state, one additive constant, two xor-shift
multiplies. It is tiny, well known, and produces the same stream in any
language, so emitted plans and QA files are reproducible outside this
package. Bounded draws use rejection sampling to stay unbiased.
"""

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic 64-bit generator; identical output for identical seeds."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        limit = MASK64 + 1 - ((MASK64 + 1) % n)
        while True:
            draw = self.next_u64()
            if draw < limit:
                return draw % n


def shuffled(items, rng: SplitMix64) -> list:
    """Fisher-Yates shuffle, high index down, consuming one draw per step."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def sample_indices(n: int, k: int, rng: SplitMix64) -> list[int]:
    """k distinct indices from range(n), returned sorted (original order)."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot sample {k} from {n}")
    pool = list(range(n))
    for i in range(k):
        j = i + rng.below(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return sorted(pool[:k])


def choose(items, k: int, rng: SplitMix64) -> list:
    """k distinct items in draw order (not sorted)."""
    items = list(items)
    n = len(items)
    if not 0 <= k <= n:
        raise ValueError(f"cannot choose {k} from {n}")
    for i in range(k):
        j = i + rng.below(n - i)
        items[i], items[j] = items[j], items[i]
    return items[:k]
