"""Reproducible random substreams.

Every consumer of randomness (channel generation, randomization, SBF
weight sampling, PAPR symbols) draws from its own Philox stream keyed by
``(master_seed, purpose, *indices)``, so results do not depend on the
order in which work items are evaluated or on how many threads run them.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def substream(master_seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Return an independent generator for ``(master_seed, purpose, indices)``."""
    key = (_tag(purpose),) + tuple(int(i) for i in indices)
    seq = np.random.SeedSequence(entropy=int(master_seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly symmetric complex Gaussian samples, CN(0, 1).

    Real and imaginary parts are independent N(0, 1/2).  The trailing axis of
    the underlying real draw holds (re, im), so drawing ``(N, n)`` and then
    ``(N', n)`` with ``N' > N`` from a fresh stream shares the first N rows.
    """
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    raw = rng.standard_normal(shape + (2,))
    return (raw[..., 0] + 1j * raw[..., 1]) * np.sqrt(0.5)
