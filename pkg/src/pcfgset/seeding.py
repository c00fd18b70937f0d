"""Deterministic derivation of independent random substreams.

Hash-based so that (seed, tag...) always yields the same stream on every
platform, and streams for different tags never alias each other.
"""

from __future__ import annotations

import hashlib
import random

# Seed used by tests and scripts when the caller supplies none.
DEFAULT_SEED = 0


def subseed(*parts: object) -> int:
    """Derive a 64-bit seed from an ordered tuple of hashable parts."""
    material = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big")


def substream(*parts: object) -> random.Random:
    """A fresh random.Random seeded from the parts."""
    return random.Random(subseed(*parts))
