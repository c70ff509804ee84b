"""Named RNG sub-streams so one seed reproducibly drives every component."""

import numpy as np

# Fixed stream ids; adding new names is fine, renumbering is not.
_STREAMS = {"data": 0, "init": 1, "sampling": 2, "selection": 3}


def rng_stream(seed, name):
    """Independent generator for the named stream of a run seed."""
    if name not in _STREAMS:
        raise KeyError(f"unknown RNG stream {name!r}; known: {sorted(_STREAMS)}")
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAMS[name],))
    return np.random.default_rng(ss)
