"""Named seed streams derived from one master seed."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, name: str) -> int:
    """Stable 63-bit seed for the stream ``name`` under ``master``.

    The same (master, name) pair always maps to the same seed, on every
    platform and Python version, so nothing depends on ambient entropy.
    """
    digest = hashlib.sha256(f"{int(master)}/{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
