"""Deterministic seed derivation for order-independent parallel work."""

from __future__ import annotations

import hashlib


def derive_seed(base_seed: int, *parts: str | int) -> int:
    """Derive a 64-bit seed from a base seed plus context parts.

    Stable across processes and platforms, so per-record work can be
    scheduled in any order without changing results.
    """
    key = ":".join([str(int(base_seed))] + [str(p) for p in parts])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
