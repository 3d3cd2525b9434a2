"""Seeded, counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *tags)``.  Tags may be
non-negative integers (node ids, run ids) or short strings (purpose names),
so that e.g. the error stream of node 3 in run 17 never depends on how many
numbers any other stream consumed.
"""

from __future__ import annotations

import zlib

import numpy as np

RNG_NAME = "philox-seedsequence-v1"


def _tag(value: int | str) -> int:
    if isinstance(value, str):
        return zlib.crc32(value.encode("utf-8"))
    if value < 0:
        raise ValueError(f"stream tags must be non-negative, got {value}")
    return int(value)


def stream(seed: int, *tags: int | str) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_tag(t) for t in tags))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(seed: int, *tags: int | str) -> int:
    """A 32-bit integer seed derived from ``(seed, *tags)``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_tag(t) for t in tags))
    return int(seq.generate_state(1, dtype=np.uint32)[0])
