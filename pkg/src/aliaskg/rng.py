"""Named, seed-derived random substreams.

Every consumer of randomness asks for its own stream, keyed by the run seed
and a tuple of names/ints, so that adding a draw in one place never shifts
the draws seen elsewhere.
"""

import hashlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def substream(seed: int, *names) -> np.random.Generator:
    """Return a Generator determined only by ``seed`` and ``names``."""
    entropy = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    entropy.extend(_key(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *names) -> int:
    return int(substream(seed, *names).integers(0, 2**63 - 1))
