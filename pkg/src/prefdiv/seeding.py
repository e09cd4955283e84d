"""Deterministic RNG derivation.

All randomness in the package flows from one user seed through named
derivation paths, e.g. ``(seed, "select", question_id)``. Keys are hashed
with BLAKE2b into Philox keys, so results are independent of processing
order and stable across platforms and runs.
"""

from __future__ import annotations

import hashlib

import numpy as np

_DOMAIN = b"prefdiv.seeding"


def _digest(parts: tuple) -> bytes:
    h = hashlib.blake2b(_DOMAIN, digest_size=16)
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return h.digest()


def derive_rng(*parts) -> np.random.Generator:
    """Generator keyed by the given parts (counter-based Philox stream)."""
    raw = _digest(parts)
    key = np.frombuffer(raw, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_int(*parts) -> int:
    """63-bit integer derived from the given parts, for nested seeding."""
    raw = _digest(parts)
    return int.from_bytes(raw[:8], "little") >> 1
