"""Stable text hashing shared by the feature hasher, the fallback embedder,
and per-sample seed derivation.

Python's builtin ``hash`` is salted per process, so everything here goes
through BLAKE2b, which is identical across runs and platforms. The
``HASH_VERSION`` tag is persisted in model and bank files; bump it if the
scheme ever changes so stale artifacts are detectable.
"""

from __future__ import annotations

import hashlib

HASH_VERSION = "blake2b64-v1"

_MASK64 = (1 << 64) - 1


def stable_hash64(text: str, namespace: str = "") -> int:
    """64-bit deterministic hash of ``text`` within ``namespace``."""
    h = hashlib.blake2b(digest_size=8)
    if namespace:
        h.update(namespace.encode("utf-8"))
        h.update(b"\x00")
    h.update(text.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def derive_seed(base_seed: int, *parts: str | int) -> int:
    """Derive an independent 63-bit seed from a base seed and context parts.

    Used to give each sample (and each stochastic pass) its own RNG stream
    that depends only on the identifiers, never on processing order.
    """
    key = ":".join([str(base_seed), *[str(p) for p in parts]])
    return stable_hash64(key, namespace="seed") & (_MASK64 >> 1)
