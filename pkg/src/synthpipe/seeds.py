"""Deterministic seed derivation.

All randomness in a run flows from a single integer seed; stage- and
job-level RNGs get labeled sub-seeds so that re-running an identical
configuration reproduces every draw.
"""

import hashlib

SEED_SCHEME = "sha256-v1"


def derive_seed(root: int, *labels) -> int:
    """Derive a stable 63-bit sub-seed from a root seed and labels."""
    h = hashlib.sha256()
    h.update(str(root).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big") & 0x7FFFFFFFFFFFFFFF
