"""Named, order-independent random substreams."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed: int, *path) -> np.random.Generator:
    """A generator determined only by ``seed`` and the key ``path``.

    ``stream(7, 3, "rd")`` is the same stream however many other streams were
    created before it, so iterations can be trained in any order.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(_key(p) for p in path))))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a seed for keyed sub-streams from an existing generator."""
    return int(rng.integers(0, 2**63 - 1))
