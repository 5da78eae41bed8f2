"""Deterministic, splittable random number generation.

All randomness in the package flows through Philox (counter-based), keyed
by a master seed plus a stream label, so every run is reproducible across
platforms and independent subsystems never share a stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

RNG_ALGORITHM = "philox4x64"


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


def seeded_rng(seed: int) -> np.random.Generator:
    """Generator fully determined by the seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def labeled_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream for (seed, label); identical labels replay."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((seed, _label_key(label))))
    )


def derive_seed(seed: int, label: str) -> int:
    """Stable 63-bit child seed for (seed, label), e.g. per-scene seeds."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
