"""Deterministic seed derivation for every random draw in a comparison.

Each consumer gets its own 64-bit seed from a keyed blake2b hash of the
master seed and a role path such as ("train", example_id, architecture).
Seeds therefore never collide across roles, examples, or architectures,
and adding a run never shifts the seeds of existing ones.
"""

from __future__ import annotations

import hashlib

ROLE_GENERATE = "gen"
ROLE_INIT = "init"
ROLE_TRAIN = "train"
ROLE_PERMUTATION = "perm"


def derive_seed(master_seed: int, *parts: str) -> int:
    """Map (master seed, role path) to an unsigned 64-bit seed."""
    if not 0 <= master_seed < 2 ** 64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    if not parts:
        raise ValueError("at least one role part is required")
    for part in parts:
        if not part or "|" in part:
            raise ValueError(f"invalid seed part {part!r}")
    h = hashlib.blake2b(key=master_seed.to_bytes(8, "little"), digest_size=8)
    h.update("|".join(parts).encode("ascii"))
    return int.from_bytes(h.digest(), "little")


def generation_seed(master_seed: int, example_id: str) -> int:
    return derive_seed(master_seed, ROLE_GENERATE, example_id)


def init_seed(master_seed: int, example_id: str, architecture: str) -> int:
    return derive_seed(master_seed, ROLE_INIT, example_id, architecture)


def train_seed(master_seed: int, example_id: str, architecture: str) -> int:
    return derive_seed(master_seed, ROLE_TRAIN, example_id, architecture)


def permutation_seed(master_seed: int, example_id: str, architecture: str) -> int:
    return derive_seed(master_seed, ROLE_PERMUTATION, example_id, architecture)
