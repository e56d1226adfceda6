"""Derived random streams: one root seed, one independent stream per
(purpose, station, sub-key), so toggling a feature never shifts the draws
of unrelated components."""

from __future__ import annotations

import random

import numpy as np

PLACEMENT = 0
TEMPLATE = 1
BACKOFF = 2
PHASE = 3
SIZES = 4
SHADOWING = 5


def derive_seed(root: int, *keys: int) -> int:
    words = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in keys)).generate_state(2, np.uint32)
    return (int(words[0]) << 32) | int(words[1])


def py_stream(root: int, *keys: int) -> random.Random:
    return random.Random(derive_seed(root, *keys))


def np_stream(root: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *keys))
