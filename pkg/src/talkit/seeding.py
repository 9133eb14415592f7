"""Deterministic seed derivation for independent RNG streams.

Streams are keyed by (root seed, purpose, indices...) through SHA-256 so that
parallel and serial execution draw identical numbers, regardless of Python's
per-process hash randomization.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Map a (root, label, index, ...) key to a stable 63-bit seed."""
    key = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
