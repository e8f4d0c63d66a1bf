"""Deterministic seed derivation.

Every stochastic component owns a child seed derived from the experiment root
seed plus a stable path (sweep index, user id, purpose string). Results are
then independent of execution order and thread count.
"""

import hashlib

import numpy as np


def _as_entropy(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def child_seed(root_seed: int, *path) -> np.random.SeedSequence:
    """SeedSequence for (root, path). Same inputs, same stream, any platform."""
    return np.random.SeedSequence([_as_entropy(root_seed)] + [_as_entropy(p) for p in path])


def rng_for(root_seed: int, *path) -> np.random.Generator:
    return np.random.default_rng(child_seed(root_seed, *path))
