# modules/random_streams.py
"""Reproducible substreams: one independent generator per (seed, key...) tuple."""

import numpy as np

# purpose tags keep streams for different jobs apart under one master seed
STREAM_FIELD = 1
STREAM_PATTERN = 2
STREAM_BOOTSTRAP = 3


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
