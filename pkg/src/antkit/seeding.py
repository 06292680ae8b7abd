"""Deterministic seed derivation for named substreams.

All randomness in a run flows from one root seed; independent consumers
(data shuffling, init, sampling, ...) get stable substream seeds derived by
hashing the root with a name, so adding a consumer never perturbs the others.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *names: str) -> int:
    payload = ":".join([str(int(root)), *names]).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    # 63 bits so every consumer (torch, numpy, random) accepts it as-is
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)
