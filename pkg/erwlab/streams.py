"""Counter-based random streams.

Every uniform used by the simulator is a pure function of
(master seed, replica, site, visit index, channel), evaluated with Philox4x32-10.
Nothing is consumed sequentially, so the k-th cookie at site x is the same
random variable whichever order a walk happens to reach it in.
"""
from typing import NamedTuple, Tuple

import numpy as np

PHILOX_M4x32_0 = np.uint64(0xD2511F53)
PHILOX_M4x32_1 = np.uint64(0xCD9E8D57)
PHILOX_W32_0 = 0x9E3779B9
PHILOX_W32_1 = 0xBB67AE85
PHILOX_ROUNDS = 10

MASK32 = np.uint64(0xFFFFFFFF)
SHIFT32 = np.uint64(32)
SITE_OFFSET = 2**31

# Channel 0 draws the p-cookies; channel s + 1 drives coupling stage s.
BASE_CHANNEL = 0


class SeedKey(NamedTuple):
    seed: int
    replica: int


def philox4x32(
    counter: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    key: Tuple[int, int],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized Philox4x32-10 block function.

    ``counter`` holds four arrays of 32-bit words (broadcastable), ``key`` two
    32-bit ints. Returns the four output words as uint64 arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = key[0] & 0xFFFFFFFF, key[1] & 0xFFFFFFFF

    for _ in range(PHILOX_ROUNDS):
        prod0 = c0 * PHILOX_M4x32_0
        prod1 = c2 * PHILOX_M4x32_1
        hi0, lo0 = prod0 >> SHIFT32, prod0 & MASK32
        hi1, lo1 = prod1 >> SHIFT32, prod1 & MASK32

        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
        k0 = (k0 + PHILOX_W32_0) & 0xFFFFFFFF
        k1 = (k1 + PHILOX_W32_1) & 0xFFFFFFFF

    return c0, c1, c2, c3


class CounterStream:
    """Uniform draws for one replica, addressed by (site, visit, channel)."""

    def __init__(self, seed: int, replica: int) -> None:
        if not 0 <= seed < 2**64:
            raise ValueError("Master seed must be an unsigned 64-bit integer")
        if not 0 <= replica < 2**32:
            raise ValueError("Replica index must fit in 32 bits")
        self.seed = seed
        self.replica = replica
        self._key = (seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF)

    @classmethod
    def from_key(cls, seed_key: SeedKey) -> "CounterStream":
        return cls(seed_key.seed, seed_key.replica)

    @property
    def seed_key(self) -> SeedKey:
        return SeedKey(self.seed, self.replica)

    def uniforms(
        self, sites: np.ndarray, visits: np.ndarray, channel: int = BASE_CHANNEL
    ) -> np.ndarray:
        """53-bit uniforms in [0, 1) for the broadcast grid of sites and visits.

        Typical use passes ``sites[:, None]`` and ``visits[None, :]`` to get a
        (sites x visits) block.
        """
        sites = np.asarray(sites, dtype=np.int64) + SITE_OFFSET
        visits = np.asarray(visits, dtype=np.int64)
        words = philox4x32(
            (
                sites.astype(np.uint64),
                visits.astype(np.uint64),
                np.uint64(self.replica),
                np.uint64(channel),
            ),
            self._key,
        )
        high = words[0] << np.uint64(21)
        low = words[1] >> np.uint64(11)
        bits = (high ^ low) & np.uint64((1 << 53) - 1)
        return bits.astype(np.float64) * (1.0 / 2**53)
