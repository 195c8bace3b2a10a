"""PCG32 random number generator.

All randomness in this package (synthetic cubes, speckle noise, weight
initialization) flows through this generator so that equal seeds give
byte-identical results on every platform.  Based on the minimal C
implementation from https://www.pcg-random.org (XSH-RR output function).
"""

import numpy as np

_MASK64 = 0xFFFF_FFFF_FFFF_FFFF
_MULT = 6364136223846793005
# Default stream constant of the reference implementation; always odd.
DEFAULT_INC = 0xDA3E39CB94B95BDB


class PCG32:
    """32-bit PCG generator seeded by direct state assignment."""

    def __init__(self, seed: int, inc: int = DEFAULT_INC):
        self.state = seed & _MASK64
        self.inc = (inc | 1) & _MASK64

    def next_u32(self) -> int:
        oldstate = self.state
        self.state = (oldstate * _MULT + self.inc) & _MASK64
        xorshifted = (((oldstate >> 18) ^ oldstate) >> 27) & 0xFFFF_FFFF
        rot = oldstate >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFF_FFFF

    def next_float(self) -> float:
        """Uniform double in [0, 1): 32-bit output / 2**32."""
        return self.next_u32() / 4294967296.0

    def floats(self, count: int) -> np.ndarray:
        """Next `count` uniform doubles in [0, 1) in draw order."""
        out = np.empty(count, dtype=np.float64)
        for i in range(count):
            out[i] = self.next_u32()
        out /= 4294967296.0
        return out
