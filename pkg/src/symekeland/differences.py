"""One-sided difference operators with zero (Dirichlet) extension.

A discrete gradient at a cell is formed from one forward or backward
difference per axis.  All ``2**N`` combinations are used and averaged, so
every quantity built on top (seminorms, integral functionals) is invariant
under the reflections of the lattice.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp

from .geometry import Grid


def _difference_matrix(grid: Grid, axis: int, step: int) -> sp.csr_matrix:
    nb, length = grid.neighbors(axis, step)
    rows = np.arange(grid.size)
    ok = nb >= 0
    # forward: (u[nb] - u) / l ; backward: (u - u[nb]) / l
    sign = 1.0 if step > 0 else -1.0
    data = np.concatenate([-sign / length, sign / length[ok]])
    r = np.concatenate([rows, rows[ok]])
    c = np.concatenate([rows, nb[ok]])
    return sp.csr_matrix((data, (r, c)), shape=(grid.size, grid.size))


def stencils(grid: Grid) -> list[list[sp.csr_matrix]]:
    """``stencils(grid)[s][i]`` differentiates along axis ``i`` for the
    ``s``-th forward/backward combination."""
    key = "stencils"
    if key not in grid._cache:
        N = grid.dimension
        ops = {(i, st): _difference_matrix(grid, i, st) for i in range(N) for st in (1, -1)}
        combos = itertools.product((1, -1), repeat=N)
        grid._cache[key] = [[ops[(i, s[i])] for i in range(N)] for s in combos]
    return grid._cache[key]


def gradients(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Discrete gradients, shape ``(2**N, cells, N)``."""
    return np.stack([np.column_stack([D @ values for D in combo]) for combo in stencils(grid)])


def gradient_adjoint(grid: Grid, fields: np.ndarray) -> np.ndarray:
    """Apply the transpose of :func:`gradients` to ``fields`` of the same shape."""
    out = np.zeros(grid.size)
    for combo, f in zip(stencils(grid), fields):
        for i, D in enumerate(combo):
            out += D.T @ f[:, i]
    return out
