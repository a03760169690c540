"""Deterministic substream derivation from a single master seed.

Every random draw in a simulation comes from a stream keyed by an integer
path (purpose tag plus indices), so UAV 3's data in setting 7 is the same
no matter how many UAVs exist, which worker generates it, or in which
order clients run.
"""
from __future__ import annotations

import numpy as np

# Purpose tags.  The tag leads the path so that paths of different length
# and meaning cannot collide.
INIT = 1
GEOMETRY = 2
DATA = 3
TRAIN = 4


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the generator for the substream identified by ``path``."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, *path]))


class Streams:
    """Factory handing out substreams of one master seed."""

    def __init__(self, master_seed: int):
        if master_seed < 0:
            raise ValueError("master seed must be non-negative")
        self.master_seed = int(master_seed)

    def rng(self, *path: int) -> np.random.Generator:
        return substream(self.master_seed, *path)
