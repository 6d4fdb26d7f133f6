"""Reproducible random streams.

Every stochastic routine in this package draws from a PCG64 generator keyed
by an integer tuple through :class:`numpy.random.SeedSequence`.  A given key
therefore maps to the same stream on every platform and under any execution
schedule, which is what makes parallel simulation runs bit-reproducible.

Normal variates are produced by inverse-CDF transform of 53-bit uniforms
instead of the generator's native ziggurat, so sampled datasets do not depend
on NumPy's internal sampling algorithms.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_U53 = float(1 << 53)


def substream(*key: int) -> np.random.Generator:
    """Return the PCG64 generator identified by an integer key tuple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def derive_seed(*key: int) -> int:
    """Fold a key tuple into a single 64-bit seed for nested derivation."""
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])


def uniform_open(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1), symmetric about 1/2."""
    return (gen.integers(0, 1 << 53, size=size, dtype=np.int64) + 0.5) / _U53


def normal(gen: np.random.Generator, loc, scale, size) -> np.ndarray:
    """Normal variates via the inverse CDF; `loc`/`scale` may be arrays."""
    return np.asarray(loc) + np.asarray(scale) * ndtri(uniform_open(gen, size))


def bernoulli(gen: np.random.Generator, p, size) -> np.ndarray:
    """0/1 draws with success probability `p` (scalar or per-element array)."""
    return (gen.random(size) < p).astype(np.int8)
