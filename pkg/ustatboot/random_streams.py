"""
Counter-based random streams for reproducible parallel replication.

Replicate b draws from a Philox generator whose key is the master seed and
whose counter starts at b << 192, so every replicate owns a disjoint block of
the counter space and its numbers do not depend on which worker produced them.
"""

import numpy as np
from scipy.special import ndtri

from .exceptions import InvalidArgumentError

_SEED_LIMIT = 2 ** 64
_STREAM_SHIFT = 192
_UNIFORM_BITS = 52


class ReplicateStreams:
    """
    Family of independent random streams indexed by replicate number.

    Args:
        seed: Master seed, an unsigned 64-bit integer
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < _SEED_LIMIT:
            raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed

    def generator(self, index: int) -> np.random.Generator:
        """Return a fresh generator positioned at the start of stream ``index``."""
        if index < 0:
            raise InvalidArgumentError("stream index must be non-negative")
        bit_generator = np.random.Philox(key=self.seed, counter=int(index) << _STREAM_SHIFT)
        return np.random.Generator(bit_generator)

    @staticmethod
    def uniforms(gen: np.random.Generator, size) -> np.ndarray:
        """Uniform variates on the open interval (0, 1)."""
        raw = gen.integers(0, 2 ** _UNIFORM_BITS, size=size, dtype=np.uint64)
        return (raw + 0.5) * 2.0 ** -_UNIFORM_BITS

    @classmethod
    def normals(cls, gen: np.random.Generator, size) -> np.ndarray:
        """Standard normal variates by the inverse-cdf transform of :meth:`uniforms`."""
        return ndtri(cls.uniforms(gen, size))

    @staticmethod
    def indices(gen: np.random.Generator, n: int, size) -> np.ndarray:
        """Uniform row indices in [0, n)."""
        return gen.integers(0, n, size=size)
