"""
Named random substreams derived from the single run seed.

Each component draws from its own stream (split, adasyn, shuffle, synth, hmm),
keyed by the stream name and optional integer keys such as a fold index, so
changing how one component consumes randomness never perturbs another.
"""

import hashlib
from typing import Union

import numpy as np


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def substream_seed(seed: int, name: str, *keys: Union[int, str]) -> int:
    """
    Derive a 32-bit integer seed for a named substream.

    Args:
        seed: Run seed (any non-negative integer, 64-bit is fine)
        name: Stream name, e.g. "adasyn"
        *keys: Further integer or string keys (fold index, trial id)

    Returns:
        Integer usable as numpy/scikit-learn random_state

    Example:
        >>> substream_seed(7, "split") == substream_seed(7, "split")
        True
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, _name_key(name)]
    for key in keys:
        entropy.append(_name_key(key) if isinstance(key, str) else int(key))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def substream(seed: int, name: str, *keys: Union[int, str]) -> np.random.Generator:
    """Generator for a named substream; see substream_seed."""
    return np.random.default_rng(substream_seed(seed, name, *keys))
