"""Deterministic derivation of independent RNG substreams.

Replicas and noise modes each own a substream derived from one master
seed, so adding replicas or modes never perturbs existing ones and every
run is reproducible bit for bit.
"""

from __future__ import annotations

import hashlib

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer: a 64-bit avalanche of the input."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def substream_seed(seed: int, index: int) -> int:
    """Seed of substream `index`: seed XOR-mixed with an avalanched index."""
    return mix64((seed & _MASK) ^ mix64(_GAMMA + index))


def derive_seed(master: int, label: str) -> int:
    """Labelled subsystem seed, e.g. ``derive_seed(s, "replica:3")``."""
    payload = f"{master & _MASK}:{label}".encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")
