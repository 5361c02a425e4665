"""Counter-based random substreams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, domain, index)``. Work can therefore be split across
threads in any way without changing results.
"""

import numpy as np

# Domain tags keep unrelated consumers of one seed on disjoint streams.
SPHERE = 0x5350
FIELD = 0x4649
PERMUTATION = 0x5045
SYNTHETIC = 0x5359


def substream(seed, domain, index):
    """Return a fresh generator for substream ``index`` of ``domain``."""
    ss = np.random.SeedSequence(int(seed) & (2**128 - 1), spawn_key=(domain, int(index)))
    return np.random.Generator(np.random.Philox(ss))
