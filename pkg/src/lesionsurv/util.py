"""Deterministic RNG stream derivation.

All randomness in the library flows through named streams derived by hashing
the master seed together with string/int labels, so results never depend on
execution order, parallel scheduling, or Python's per-process hash salt.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """64-bit seed derived from the parts via SHA-256. Platform-stable."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, (int, np.integer)):
            token = f"i:{int(part)}"
        elif isinstance(part, str):
            token = f"s:{part}"
        else:
            raise TypeError(f"seed parts must be ints or strings, got {type(part)!r}")
        h.update(token.encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "big")


def rng_from(*parts) -> np.random.Generator:
    """Generator for the named stream."""
    return np.random.Generator(np.random.PCG64(stable_seed(*parts)))
