"""Named random sub-streams derived from a single root seed."""
import zlib

import numpy as np


def substream(seed, name, *extra):
    """Return a Generator for sub-stream `name` of root `seed`.

    Streams with different names (or extra integer keys, e.g. a fold index)
    are statistically independent; the same arguments always reproduce the
    same stream.
    """
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
