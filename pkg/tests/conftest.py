"""Shared oracles and problem builders for the test suite.

The dense helpers here deliberately avoid the library's fast densification
paths where independence matters: entries are evaluated by multiplying core
slices index by index, so a structural bug in the optimized contractions
cannot cancel out on both sides of a comparison.
"""

import itertools

import numpy as np
import pytest

from ttamen import (
    PoissonSpec,
    TTMatrix,
    TTVector,
    build_poisson,
    tt_random,
    ttmat_add,
    ttmat_identity,
)


def slow_dense_vector(x: TTVector) -> np.ndarray:
    """Entry-by-entry densification, little-endian flat order."""
    sizes = x.mode_sizes
    out = np.empty(int(np.prod(sizes)))
    for f, mi in enumerate(itertools.product(*[range(n) for n in sizes][::-1])):
        idx = mi[::-1]  # product iterates the last mode fastest; we want the first
        v = np.ones((1, 1))
        for k, i in enumerate(idx):
            v = v @ x.cores[k][:, i, :]
        out[f] = v[0, 0]
    return out


def slow_dense_matrix(A: TTMatrix) -> np.ndarray:
    """Entry-by-entry densification of an operator, little-endian on both sides."""
    rows, cols = A.row_sizes, A.col_sizes
    nr = int(np.prod(rows))
    nc = int(np.prod(cols))
    out = np.empty((nr, nc))
    row_indices = list(itertools.product(*[range(n) for n in rows][::-1]))
    col_indices = list(itertools.product(*[range(m) for m in cols][::-1]))
    for fr, mir in enumerate(row_indices):
        ir = mir[::-1]
        for fc, mic in enumerate(col_indices):
            ic = mic[::-1]
            v = np.ones((1, 1))
            for k, (i, j) in enumerate(zip(ir, ic)):
                v = v @ A.cores[k][:, i, j, :]
            out[fr, fc] = v[0, 0]
    return out


def random_spd_system(d: int, n: int, rng):
    """Laplacian-plus-random-shift SPD TT system with a random low-rank rhs."""
    A, _ = build_poisson(PoissonSpec(dimension=d, grid_points=n))
    shift = float(rng.uniform(0.5, 2.0))
    A = ttmat_add(A, ttmat_identity(A.row_sizes), 1.0, shift)
    y = tt_random([n] * d, 2, rng=rng)
    return A, y


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(b)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / (denom or 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
