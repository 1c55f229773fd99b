import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(master: int, name: str) -> int:
    """64-bit sub-seed for a named subsystem ("synth", "train", "eval", "repeat-3", ...)."""
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=(_key(name),))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def derive_rng(master: int, name: str) -> np.random.Generator:
    """Independent Generator per (master seed, name); adding names never perturbs existing streams."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master), spawn_key=(_key(name),)))
