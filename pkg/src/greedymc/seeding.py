"""Counter-based seed derivation so parallel tasks get independent streams."""

import numpy as np


def derive_seed(master, *keys):
    """64-bit seed for the task addressed by ``keys`` under ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
