"""Counter-based random streams.

All randomness in the package flows through Philox generators keyed by
``(seed, stream)``.  Philox is counter-based, so two streams with different
keys are independent regardless of how many draws each consumes, and results
do not depend on scheduling or batch sizes.
"""

from __future__ import annotations

import numpy as np

from .errors import SpecificationError


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a generator for the given (seed, stream) key."""
    if seed is None:
        raise SpecificationError("seed must be an integer, not None")
    seed = int(seed)
    stream = int(stream)
    if seed < 0 or stream < 0:
        raise SpecificationError("seed and stream must be non-negative")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
