"""Named random streams.

All randomness in a run flows from one root seed. Sub-streams are derived
from (root, name, name, ...) tuples via a stable hash, so adding a stage or
an iteration never perturbs the streams of the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "stream"]


def derive_seed(root: int, *names) -> int:
    """Stable 64-bit seed for the stream identified by (root, *names)."""
    h = hashlib.sha256()
    h.update(str(int(root)).encode("utf-8"))
    for name in names:
        h.update(b"/")
        h.update(repr(name).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def stream(root: int, *names) -> np.random.Generator:
    """Generator for the named sub-stream of ``root``."""
    return np.random.default_rng(np.random.SeedSequence(derive_seed(root, *names)))
