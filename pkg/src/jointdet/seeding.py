"""Named RNG substreams derived from a single root seed.

Every source of randomness in the package (scene generation, proposal
sampling, weight initialization, shuffling, ...) draws from its own named
substream so components can be varied independently while the whole run
stays a pure function of the root seed.
"""

import zlib

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF


def substream(root_seed: int, label: str, *indices: int) -> np.random.Generator:
    """Independent generator for the (label, *indices) substream of a root seed."""
    key = zlib.crc32(label.encode("utf-8"))
    entropy = (int(root_seed) & _MASK, key) + tuple(int(i) & _MASK for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy))
