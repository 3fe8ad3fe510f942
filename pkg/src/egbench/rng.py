"""Deterministic random streams keyed by structured tuples.

Every stochastic component draws from a Philox counter-based generator
whose 128-bit key is a stable hash of its context tuple (e.g. master
seed, run id, sample index, stage name). This keeps results bit-identical
across platforms and independent of worker scheduling.
"""

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Derive a 128-bit integer from ints, floats, and strings.

    Uses SHA-256 over the repr of each part, so equal inputs hash equally
    in every process (unlike the builtin ``hash``).
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:16], "big")


def make_rng(*parts) -> np.random.Generator:
    """Counter-based generator seeded from ``stable_seed(*parts)``."""
    return np.random.Generator(np.random.Philox(key=stable_seed(*parts)))
