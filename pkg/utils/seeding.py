"""
FirmCast - Seeding

Named random sub-streams derived from one master seed.
"""

import zlib

import numpy as np

STREAMS = ("split", "init", "batching", "shapley", "synth", "sampling", "gibrat")


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """
    Derive an independent generator for a named stream.

    Args:
        seed: Master seed
        name: Stream name (split, init, batching, shapley, synth, sampling)
        extra: Further integers (e.g. a company index) for nested sub-streams

    Returns:
        numpy Generator
    """
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
