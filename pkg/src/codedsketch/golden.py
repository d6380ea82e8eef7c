"""Built-in worked example: p = m = n = 4, b' = 2, d = 3 on 8x8 matrices.

The hash and sign tables are read off the sketch polynomials of the example
(not drawn from seeds). ``SKETCH_TABLE[eta][k]`` lists ``(sign, i, j)`` triples
such that sketch entry ``k`` of sketch ``eta`` equals
``sum(sign * C[i, j])`` over block entries of ``C``.
"""

from __future__ import annotations

import numpy as np

from .engine import SchemeParams, SketchFamily
from .sketch_core import FixedHash, FixedSign

P = M = N = 4
BPRIME = 2
D = 3
WORKERS = 80
SIZE = 8

# F_1 = (-A0 + A1 + A3) - A2 a;  F_2 = (A1 + A2) + (A0 - A3) a;  F_3 = A2 + (-A0 + A1 + A3) a
ROW_HASHES = ((0, 0, 1, 0), (1, 0, 0, 1), (1, 1, 0, 1))
ROW_SIGNS = ((-1, 1, -1, 1), (1, 1, 1, -1), (-1, 1, 1, 1))
# G_1 = (-B1 - B3) + (B0 + B2) a;  G_2 = (B0 - B1) + (-B2 + B3) a;  G_3 = (-B1 - B2 + B3) + B0 a
COL_HASHES = ((1, 0, 1, 0), (0, 0, 1, 1), (1, 0, 0, 0))
COL_SIGNS = ((1, -1, 1, -1), (1, -1, -1, 1), (1, -1, -1, 1))

SKETCH_TABLE = {
    1: (
        ((1, 0, 1), (1, 0, 3), (-1, 1, 1), (-1, 1, 3), (-1, 3, 1), (-1, 3, 3)),
        ((-1, 0, 0), (-1, 0, 2), (1, 1, 0), (1, 1, 2), (1, 2, 1), (1, 2, 3), (1, 3, 2), (1, 3, 0)),
        ((-1, 2, 0), (-1, 2, 2)),
    ),
    2: (
        ((1, 1, 0), (-1, 1, 1), (1, 2, 0), (-1, 2, 1)),
        ((1, 0, 0), (-1, 0, 1), (-1, 1, 2), (1, 1, 3), (-1, 2, 2), (1, 2, 3), (-1, 3, 0), (1, 3, 1)),
        ((-1, 0, 2), (1, 0, 3), (1, 3, 2), (-1, 3, 3)),
    ),
    3: (
        ((-1, 2, 1), (-1, 2, 2), (1, 2, 3)),
        ((1, 0, 1), (1, 0, 2), (-1, 0, 3), (-1, 1, 1), (-1, 1, 2), (1, 1, 3), (1, 2, 0),
         (-1, 3, 1), (-1, 3, 2), (1, 3, 3)),
        ((-1, 0, 0), (1, 1, 0), (1, 3, 0)),
    ),
}


def params(workers: int = WORKERS) -> SchemeParams:
    return SchemeParams(P, M, N, BPRIME, D, workers)


def family() -> SketchFamily:
    return SketchFamily(
        tuple(FixedHash(h, BPRIME) for h in ROW_HASHES),
        tuple(FixedSign(s) for s in ROW_SIGNS),
        tuple(FixedHash(h, BPRIME) for h in COL_HASHES),
        tuple(FixedSign(s) for s in COL_SIGNS),
    )


def table_combinations(C) -> np.ndarray:
    """Evaluate every ``SKETCH_TABLE`` entry on the block matrix of ``C``: ``(3, 3, br, bc)``."""
    C = np.asarray(C, dtype=float)
    br, bc = C.shape[0] // M, C.shape[1] // N
    out = np.zeros((D, 2 * BPRIME - 1, br, bc))
    for eta, row in SKETCH_TABLE.items():
        for k, terms in enumerate(row):
            for sign, i, j in terms:
                out[eta - 1, k] += sign * C[i * br:(i + 1) * br, j * bc:(j + 1) * bc]
    return out
