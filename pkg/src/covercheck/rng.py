"""SplitMix64 streams.

Every stochastic routine draws from a :class:`SplitMix64` stream derived from
``(seed, *keys)`` so that trials are independent and reproducible regardless
of evaluation order.  Draws are vectorised: output ``k`` of a stream is
``mix(state + (k + 1) * GAMMA)``, so a block of draws is a single numpy
expression.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _mix_int(z):
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def _mix_array(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """A deterministic 64-bit stream.

    Parameters
    ----------
    state : int
        Initial 64-bit state.
    """

    def __init__(self, state):
        self.state = int(state) & _MASK

    @classmethod
    def keyed(cls, seed, *keys):
        """Stream keyed by ``seed`` and any number of non-negative integer keys."""
        state = _mix_int((int(seed) + GAMMA) & _MASK)
        for key in keys:
            state = _mix_int((state ^ _mix_int((int(key) * GAMMA + 1) & _MASK)) & _MASK)
        return cls(state)

    def next_u64(self, size=None):
        if size is None:
            self.state = (self.state + GAMMA) & _MASK
            return _mix_int(self.state)
        size = int(size)
        steps = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GAMMA)
            out = _mix_array(z)
        self.state = (self.state + size * GAMMA) & _MASK
        return out

    def random(self, size=None):
        """Uniform doubles in ``[0, 1)`` with 53 random bits."""
        if size is None:
            return (self.next_u64() >> 11) * 2.0**-53
        return (self.next_u64(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def integers(self, high, size=None):
        """Uniform integers in ``[0, high)``."""
        u = self.random(size)
        if size is None:
            return min(int(u * high), high - 1)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def spawn(self, *keys):
        return SplitMix64.keyed(self.next_u64(), *keys)
