"""Deterministic stream splitting: child seed = hash(parent seed, label)."""
import hashlib

import numpy as np


def child_seed(seed: int, label) -> int:
    digest = hashlib.blake2b(f"{int(seed)}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def child_rng(seed: int, label) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, label))


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
