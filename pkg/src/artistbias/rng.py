"""
Seed splitting.

Every random stream is derived from a master seed plus a sequence of stable
labels, e.g. ``derive_rng(seed, "fold", 2, "user042")``.  The labels are
joined with ``"/"``, hashed with SHA-256, and the first 16 bytes (as four
little-endian u32 words) are appended to the master seed to form the
entropy of a :class:`numpy.random.SeedSequence`.  Streams therefore never
depend on global state or on the order in which they are requested.
"""

from __future__ import annotations

import hashlib

import numpy as np


def label_words(*labels) -> list[int]:
    digest = hashlib.sha256("/".join(str(x) for x in labels).encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def derive_seed_sequence(seed: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *label_words(*labels)])


def derive_rng(seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(seed, *labels))


def derive_int(seed: int, *labels) -> int:
    """A 32-bit integer seed for components that take a plain int."""
    return int(derive_seed_sequence(seed, *labels).generate_state(1)[0])
