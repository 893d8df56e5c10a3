"""Deterministic hashing and seed-derivation helpers.

Everything here is fixed-width integer arithmetic so results are identical
across platforms, Python versions, and process counts.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

_MASK64 = 0xFFFFFFFFFFFFFFFF

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x00000100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling round; the standard 64-bit finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(*parts: int | str) -> int:
    """Fold integers and strings into one well-mixed 64-bit seed.

    Independent of call order elsewhere: the derived seed depends only on
    the argument values, so parallel workers can derive their own streams.
    """
    h = FNV64_OFFSET
    for part in parts:
        if isinstance(part, str):
            h ^= fnv1a64(part.encode("utf-8"))
        else:
            h ^= part & _MASK64
        h = splitmix64(h)
    return h


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_json_dumps(obj) -> str:
    """Canonical JSON used for digests and on-disk reports.

    Sorted keys and fixed separators make re-serialization byte-stable.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest_config(obj) -> str:
    return hashlib.sha256(stable_json_dumps(obj).encode("utf-8")).hexdigest()
