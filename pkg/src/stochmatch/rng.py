"""Deterministic random-stream derivation.

Every stochastic computation draws from a counter-based Philox stream keyed
by ``(master seed, purpose tag, index)``.  Streams for distinct keys are
statistically independent, so a computation can be split across any number of
workers without changing its aggregate output: each unit of work owns the
stream for its own index and never touches a shared generator.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Return the generator for one (seed, tag, index) cell of the stream grid."""
    if master_seed < 0:
        raise ValueError("seed must be non-negative")
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(_tag_to_int(tag), index))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Collapse a stream key back to a 63-bit integer seed for nested use."""
    return int(substream(master_seed, tag, index).integers(0, 2**63 - 1))
