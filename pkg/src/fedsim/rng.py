"""Deterministic per-source random streams.

Every stochastic source in a run (per-link delay sampling, per-link loss
sampling, arrival process, payload sizes) draws from its own ``random.Random``
instance whose seed is derived from the scenario seed plus a structured label.
Streams are therefore independent of each other and of event interleaving:
adding traffic on one link never shifts the draw sequence of another.

Derivation goes through SHA-256 rather than ``hash()`` so it is stable across
interpreter invocations and immune to hash randomization.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(root_seed: int, *label: object) -> int:
    """Derive a 64-bit stream seed from the root seed and a label tuple."""
    tag = "/".join(str(part) for part in label)
    digest = hashlib.sha256(f"{root_seed}/{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(root_seed: int, *label: object) -> random.Random:
    """Return an independent deterministic RNG for the given source label."""
    return random.Random(derive_seed(root_seed, *label))
