"""Reproducible Philox substreams keyed by (seed, replica, mode, role).

Every stochastic routine in the package draws from one of these. Packing the
coordinates into the second Philox key word keeps streams independent across
replicas and modes while staying bitwise reproducible for a given seed,
regardless of how many values are drawn from the other streams.
"""

from __future__ import annotations

import numpy as np

_REPLICA_BITS = 24
_MODE_BITS = 24
_ROLE_BITS = 16


class StreamError(ValueError):
    pass


def stream_key(replica: int = 0, mode: int = 0, role: int = 0) -> int:
    if not 0 <= replica < (1 << _REPLICA_BITS):
        raise StreamError(f"replica out of range: {replica}")
    if not 0 <= mode < (1 << _MODE_BITS):
        raise StreamError(f"mode out of range: {mode}")
    if not 0 <= role < (1 << _ROLE_BITS):
        raise StreamError(f"role out of range: {role}")
    return (role << (_REPLICA_BITS + _MODE_BITS)) | (replica << _MODE_BITS) | mode


def substream(seed: int, *, replica: int = 0, mode: int = 0, role: int = 0) -> np.random.Generator:
    if not 0 <= int(seed) < (1 << 64):
        raise StreamError(f"seed out of range: {seed}")
    key = stream_key(replica, mode, role)
    return np.random.Generator(np.random.Philox(key=np.array([seed, key], dtype=np.uint64)))
