"""Seed plumbing: every random draw in the pipeline descends from one root seed.

Substreams are addressed by name so that independent stages (generation,
training, evaluation) cannot collide or perturb each other when one of them
changes how much randomness it consumes.
"""

import hashlib

import numpy as np


def _name_to_entropy(name) -> int:
    """Map a substream name to a stable 64-bit integer.

    Uses sha256 rather than hash() so the value does not depend on
    PYTHONHASHSEED or the platform.
    """
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(root_seed: int, *names) -> np.random.Generator:
    """Return a Generator for the named substream of ``root_seed``.

    The same (root_seed, names) pair always yields an identical stream;
    distinct name tuples yield statistically independent streams.
    """
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_name_to_entropy(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def substream_seed(root_seed: int, *names) -> int:
    """Collapse a named substream to a single integer seed (for configs that store one)."""
    return int(substream(root_seed, *names).integers(0, 2**63 - 1))
