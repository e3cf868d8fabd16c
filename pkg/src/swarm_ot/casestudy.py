"""Three-agent, ten-waypoint reference instance.

The published waypoint-side matrix ``PRINTED_DELTA`` and the published
aggregate ``PRINTED_AGGREGATE`` are shipped verbatim. The published
agent-side matrix ``PRINTED_GAMMA`` does not add up to that aggregate
(``PRINTED_DELTA + PRINTED_GAMMA != PRINTED_AGGREGATE``), and only the
aggregate reproduces the published assignment {1→8, 2→5, 3→10}. The
solver fixture therefore keeps the printed delta and uses
``PRINTED_AGGREGATE - PRINTED_DELTA`` as gamma, which stays inside [1, 10].
"""

from __future__ import annotations

import numpy as np

from .core import Assignment, Bounds, NetworkTopology, UtilityParams

PRINTED_DELTA = np.array(
    [
        [5, 4, 2, 6, 3, 7, 2, 10, 9, 1],
        [8, 2, 4, 5, 9, 5, 2, 4, 9, 2],
        [1, 1, 4, 7, 1, 6, 9, 7, 1, 9],
    ],
    dtype=float,
)

PRINTED_GAMMA = np.array(
    [
        [5, 9, 5, 2, 4, 9, 2, 5, 7, 9],
        [7, 1, 6, 9, 7, 1, 9, 10, 4, 1],
        [3, 7, 2, 10, 9, 1, 1, 6, 7, 8],
    ],
    dtype=float,
)

PRINTED_AGGREGATE = np.array(
    [
        [6, 10, 9, 14, 6, 12, 5, 17, 14, 3],
        [13, 9, 13, 15, 17, 15, 4, 7, 10, 8],
        [11, 5, 5, 15, 3, 9, 10, 10, 7, 16],
    ],
    dtype=float,
)

ETA = 10.0

EXPECTED_ASSIGNMENT = Assignment.from_one_based({1: 8, 2: 5, 3: 10})
EXPECTED_UTILITY = 50.0


def case_study() -> tuple[NetworkTopology, UtilityParams, Bounds]:
    """Topology, parameters and matching bounds of the reference instance."""
    params = UtilityParams(PRINTED_AGGREGATE - PRINTED_DELTA, PRINTED_DELTA)
    return NetworkTopology.full(3, 10), params, Bounds.matching(3, 10)
