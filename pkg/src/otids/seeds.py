"""Deterministic seed derivation.

Every run takes one master seed; each consumer (splitter, model, shuffler)
gets its own stream derived by hashing the master seed with a fixed label.
This keeps consumers independent while the whole pipeline stays
reproducible from a single number.
"""

from __future__ import annotations

import hashlib


def derive(master: int, label: str) -> int:
    """Stable 32-bit sub-seed for the given consumer label."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
