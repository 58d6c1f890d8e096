"""Deterministic stream derivation.

All randomness in the package flows through counter-based Philox (4x64)
generators keyed by (seed, stream index), so independent substreams (one
per image, per minibatch, ...) can be drawn in any order or in parallel and
still reproduce bit-identically.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, stream: int) -> np.random.Generator:
    """Generator for substream `stream` of the root seed."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
