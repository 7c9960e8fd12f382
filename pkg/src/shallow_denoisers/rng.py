"""Keyed counter-based random streams.

Every stream is a Philox generator whose key is derived from ``(seed, *path)``,
so the numbers drawn for, say, online step ``t`` depend only on the seed and
``t`` and can be replayed in isolation.
"""

import numpy as np

# stream labels, kept stable so saved experiments stay replayable
NOISE = 1
ONLINE_INDEX = 2
ONLINE_NOISE = 3
SHUFFLE = 4
INIT = 5
MONTE_CARLO = 6
DATA = 7


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` keyed by ``seed`` and integer ``path``."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    # fixed layout (seed words, path length, path) so no two keys share a prefix pattern
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, len(path), *[int(p) for p in path]])
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def normals(seed, shape, *path):
    return stream(seed, *path).standard_normal(shape)
