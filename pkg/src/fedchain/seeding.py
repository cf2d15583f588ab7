"""Deterministic sub-seed derivation.

Every random stream in an experiment is derived from one root seed plus a
named path, e.g. ``derive_seed(seed, "train", round_no)``. Path components
are folded into a NumPy SeedSequence spawn key (strings via CRC-32), so
independent pipeline stages stay reproducible in isolation.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("path components must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(root_seed: int, *path) -> np.random.SeedSequence:
    if root_seed < 0:
        raise ValueError("root seed must be non-negative")
    return np.random.SeedSequence(
        entropy=int(root_seed),
        spawn_key=tuple(_key_part(p) for p in path),
    )


def derive_rng(root_seed: int, *path) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root_seed, *path))


def derive_seed(root_seed: int, *path) -> int:
    """A 64-bit sub-seed for APIs that take a plain integer seed."""
    state = seed_sequence(root_seed, *path).generate_state(2, dtype=np.uint32)
    return int(state.view(np.uint64)[0])


__all__ = ["derive_rng", "derive_seed", "seed_sequence"]
