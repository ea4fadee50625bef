"""
Counter-based random stream

Every draw is a pure function of (seed, counter): the counter is pushed
through a SplitMix64 finalizer keyed by the seed, and the top 53 bits become
the float. Scalar and vectorized draws produce identical values, so a run
replays bit-for-bit on any platform with IEEE doubles.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB
CHILD_SALT = 0xD1B54A32D192ED03

_TWO_POW_M53 = 2.0 ** -53


def _finalize(z):
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def _finalize_array(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MUL2)
    return z ^ (z >> np.uint64(31))


def mix(seed, index):
    """Derive the seed of child stream `index` from `seed`"""
    key = _finalize((seed + GOLDEN) & MASK64)
    salt = _finalize(((index & MASK64) ^ CHILD_SALT) & MASK64)
    return _finalize((key ^ salt) & MASK64)


class RngStream:
    """Single-owner uniform stream; share only through child streams"""

    __slots__ = ('seed', 'counter', '_key')

    def __init__(self, seed, counter=0):
        self.seed = seed & MASK64
        self.counter = counter
        self._key = _finalize((self.seed + GOLDEN) & MASK64)

    def __repr__(self):
        return f"<RngStream(seed={self.seed}, counter={self.counter})>"

    def next_bits(self):
        """Raw 64-bit word for the current counter, then advance"""
        z = (self._key + (self.counter + 1) * GOLDEN) & MASK64
        self.counter += 1
        return _finalize(z)

    def uniform(self):
        return (self.next_bits() >> 11) * _TWO_POW_M53

    def uniforms(self, size):
        """`size` consecutive draws as a float64 array in [0, 1)"""
        words = self._words(size)
        return (words >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53

    def open_uniforms(self, size):
        """Draws shifted to the open interval (0, 1), for inverse-CDF sampling"""
        words = self._words(size)
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53

    def open_uniform(self):
        return ((self.next_bits() >> 11) + 0.5) * _TWO_POW_M53

    def _words(self, size):
        start = self.counter
        counters = np.arange(start + 1, start + 1 + size, dtype=np.uint64)
        z = np.uint64(self._key) + counters * np.uint64(GOLDEN)
        self.counter += size
        return _finalize_array(z)

    def child(self, index):
        """Independent stream keyed by (seed, index); ignores the counter"""
        return RngStream(mix(self.seed, index))

    def copy(self):
        return RngStream(self.seed, self.counter)


def uniform(rng):
    """One draw in [0, 1); advances the stream counter by 1"""
    return rng.uniform()
