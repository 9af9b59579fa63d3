"""Named random substreams so every stage reproduces independently."""

import hashlib

import numpy as np


def substream_seed(root_seed: int, name: str) -> np.random.SeedSequence:
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")
    return np.random.SeedSequence([root_seed, tag])


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Generator derived from (root seed, stream name), stable across runs."""
    return np.random.default_rng(substream_seed(root_seed, name))
