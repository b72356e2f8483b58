"""Reproducible random streams keyed by (master seed, replication, draw kind).

Each stream is an independent Philox counter-based generator whose key is
derived from the triple through :class:`numpy.random.SeedSequence`, so a
replication's draws do not depend on how replications are scheduled across
workers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["DRAW_KINDS", "stream"]

DRAW_KINDS = {
    "row_effect": 1,
    "col_effect": 2,
    "slab_effect": 3,
    "noise": 4,
    "row_block": 5,
    "col_block": 6,
    "edge": 7,
    "covariate": 8,
}


def stream(seed: int, replication: int, kind: str, cell: tuple = ()) -> np.random.Generator:
    """Generator for one (seed, cell, replication, kind) key.

    ``cell`` separates experiment cells (e.g. ``(N, M, parameter code)``) that
    share a master seed.
    """
    key = [int(seed), *(int(c) for c in cell), int(replication), DRAW_KINDS[kind]]
    ss = np.random.SeedSequence(key)
    return np.random.Generator(np.random.Philox(ss))
