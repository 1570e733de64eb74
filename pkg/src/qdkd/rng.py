"""Deterministic random stream used by every simulation backend.

The generator is SplitMix64 (public domain, Vigna 2015).  It was chosen over
numpy's generators because the whole point here is a stream contract simple
enough to replicate bit-for-bit inside the compiled round kernel:

    state <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z <- state
    z <- (z XOR z>>30) * 0xBF58476D1CE4E5B9   mod 2^64
    z <- (z XOR z>>27) * 0x94D049BB133111EB   mod 2^64
    output <- z XOR z>>31

Uniform doubles take the top 53 bits: u = (output >> 11) * 2^-53, giving the
dyadic grid {k * 2^-53 : 0 <= k < 2^53} in [0, 1).

Every protocol round gets its own stream seeded as

    round_seed(master, i) = mix64(master + GOLDEN * (i + 1))  mod 2^64

so rounds are independent of execution order and thread count.  The Cython
kernel implements exactly the same arithmetic on uint64, which is what makes
the two backends produce identical trial logs for identical seeds.
"""

from __future__ import annotations

from typing import Sequence

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_INV_2_53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 output function (the stateless mixing step)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def round_seed(master_seed: int, index: int) -> int:
    """Seed for the dedicated stream of round `index` under `master_seed`."""
    return mix64((master_seed + GOLDEN * (index + 1)) & MASK64)


class SplitMix64:
    """Minimal counter-based PRNG with a documented bit-exact contract."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 output bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def bit(self) -> int:
        """Fair bit: 1 iff the next uniform is below one half."""
        return 1 if self.uniform() < 0.5 else 0

    def bernoulli(self, p: float) -> bool:
        """True with probability p (consumes exactly one uniform)."""
        return self.uniform() < p

    def choose(self, probabilities: Sequence[float]) -> int:
        """Inverse-CDF draw over an ordered outcome list.

        Walks the cumulative sum in the given order with strict `u < cum`
        comparisons; if floating-point shortfall leaves u beyond the total,
        the last outcome is returned.
        """
        u = self.uniform()
        cum = 0.0
        for i, p in enumerate(probabilities):
            cum += p
            if u < cum:
                return i
        return len(probabilities) - 1
