"""Shared helpers: seeded RNG derivation, config hashing, CSV output."""

import csv
import hashlib
import json

import numpy as np


def derive_rng(seed, *key):
    """Build a Generator from a root seed plus an integer key path.

    The same (seed, key) always yields the same stream, and distinct key
    paths yield statistically independent streams.  Accepts an int, a
    SeedSequence, or an existing Generator (returned as-is, key ignored).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
        if key:
            ss = np.random.SeedSequence(entropy=ss.entropy, spawn_key=ss.spawn_key + tuple(key))
    else:
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))
    return np.random.default_rng(ss)


def config_hash(config: dict) -> str:
    """Stable short hash of a flat config mapping."""
    canon = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def pair_indices(n: int, max_pairs: int):
    """Deterministic stride subsample of all unordered index pairs i<j.

    Returns (i, j) arrays with at most max_pairs entries, taken at a
    constant stride through the row-major enumeration of the strictly
    upper triangle, so the selection is reproducible and spread evenly.
    """
    total = n * (n - 1) // 2
    if total <= max_pairs:
        i, j = np.triu_indices(n, k=1)
        return i, j
    stride = -(-total // max_pairs)  # ceil
    t = np.arange(0, total, stride, dtype=np.int64)
    # invert t -> (i, j) in the triangle enumeration; float solve then fix drift
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * t)) / 2).astype(np.int64)
    first = i * (b - i) // 2
    over = first > t
    i[over] -= 1
    first = i * (b - i) // 2
    j = t - first + i + 1
    return i, j
