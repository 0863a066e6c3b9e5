"""Integer arithmetic and seeded randomness shared by the neuromorphic blocks.

Everything here mirrors what the FPGA datapath does: two's-complement values
of a fixed width that saturate instead of wrapping, a leak implemented as a
multiply by an 8-bit factor followed by an arithmetic right shift, and a
SplitMix64 generator so that seeded runs reproduce bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
TWO_PI = 2.0 * math.pi
INV_2_53 = 1.0 / (1 << 53)


@dataclass(frozen=True)
class FixedFormat:
    """Signed two's-complement format of ``width_bits`` bits."""

    width_bits: int
    signed: bool = True

    def __post_init__(self):
        if self.width_bits <= 0:
            raise ValueError("width_bits must be positive")

    @property
    def min(self) -> int:
        if not self.signed:
            return 0
        return -(1 << (self.width_bits - 1))

    @property
    def max(self) -> int:
        if not self.signed:
            return (1 << self.width_bits) - 1
        return (1 << (self.width_bits - 1)) - 1

    def contains(self, v: int) -> bool:
        return self.min <= v <= self.max


I8 = FixedFormat(8)
I12 = FixedFormat(12)
I16 = FixedFormat(16)
U8 = FixedFormat(8, signed=False)


def saturate(v: int, fmt: FixedFormat) -> int:
    """Clamp ``v`` into the representable range of ``fmt``."""
    lo, hi = fmt.min, fmt.max
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def sat_add(a: int, b: int, fmt: FixedFormat) -> int:
    return saturate(a + b, fmt)


def leak_decay(v: int, lam: int) -> int:
    """Multiply by ``lam/256`` rounding toward minus infinity.

    Python's ``>>`` on negative ints is an arithmetic shift, which is exactly
    the hardware behavior (``-3 * 128 >> 8 == -2``).
    """
    if not 0 <= lam <= 255:
        raise ValueError(f"leak factor must be an unsigned 8-bit value, got {lam}")
    return (v * lam) >> 8


class Prng:
    """SplitMix64 stream with a Box-Muller gaussian on top.

    The state is an explicit value: copy it with :meth:`copy` to fork a
    reproducible sub-stream. ``spare`` caches the second Box-Muller sample so
    a pair of gaussians costs exactly two 64-bit draws.
    """

    __slots__ = ("state", "spare")

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64
        self.spare: float | None = None

    def copy(self) -> "Prng":
        p = Prng(0)
        p.state = self.state
        p.spare = self.spare
        return p

    def __eq__(self, other):
        if not isinstance(other, Prng):
            return NotImplemented
        return self.state == other.state and self.spare == other.spare

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * INV_2_53

    def below(self, n: int) -> int:
        """Integer in [0, n). Modulo reduction; the bias is < 2**-50 for small n."""
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def gaussian(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.spare is not None:
            z = self.spare
            self.spare = None
        else:
            # u1 in (0, 1] so the log is finite
            u1 = 1.0 - (self.next_u64() >> 11) * INV_2_53
            u2 = (self.next_u64() >> 11) * INV_2_53
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(TWO_PI * u2)
            self.spare = r * math.sin(TWO_PI * u2)
        return mu + sigma * z


def prng_next(p: Prng) -> tuple[int, Prng]:
    """Functional form of :meth:`Prng.next_u64`; ``p`` is left untouched."""
    q = p.copy()
    return q.next_u64(), q


def gaussian_sample(p: Prng, mu: float, sigma: float) -> tuple[float, Prng]:
    q = p.copy()
    return q.gaussian(mu, sigma), q
