"""Brute-force reference implementations for small instances.

Nothing here calls into the rearrangement or difference code of the main
modules: reflections are matched to cells by exhaustive nearest-centre
search, rearrangements are rebuilt level by level from their super-level
sets, and Ekeland points are found by checking every pair of lattice
states.  Only the grid (cell centres and sizes) and the energy being
tested are shared.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptyAdmissible

MAX_CELLS = 6
MAX_LEVELS = 6
MAX_STATES = 50_000


# --------------------------------------------------------------- polarize
def _mirror_index(centers: np.ndarray, e: np.ndarray, t: float, spacing: float) -> list[int]:
    """For every centre the index of the centre at its mirror image, or -1
    when the image is farther than a quarter cell from every centre."""
    out = []
    for x in centers:
        y = x - 2.0 * (float(np.dot(x, e)) - t) * e
        d = np.sqrt(((centers - y) ** 2).sum(axis=1))
        j = int(np.argmin(d))
        out.append(j if d[j] < 0.25 * spacing else -1)
    return out


def oracle_polarize(u, H):
    """Pairwise max/min across ``H`` by explicit mirror-pair enumeration.

    Images that leave the domain read zero.  Raises ``ValueError`` when an
    image inside the domain does not land on a cell centre.
    """
    grid = u.grid
    e = np.array(H.normal, dtype=float)
    t = float(H.offset)
    vals = [abs(float(a)) for a in u.values]
    centers = np.asarray(grid.centers)
    mirror = _mirror_index(centers, e, t, grid.spacing)
    out = []
    for i, x in enumerate(centers):
        j = mirror[i]
        if j < 0:
            y = x - 2.0 * (float(np.dot(x, e)) - t) * e
            if grid.domain.contains_points(y[None, :])[0]:
                raise ValueError("half-space is not compatible with the grid")
            other = 0.0
        else:
            other = vals[j]
        if float(np.dot(x, e)) <= t + 1e-14:
            out.append(max(vals[i], other))
        else:
            out.append(min(vals[i], other))
    return u.with_values(np.array(out))


# ------------------------------------------------------------ symmetrize
_DIRECTION = (1.0, math.sqrt(2.0), math.sqrt(3.0))


def _schwarz_ranking(grid) -> list[int]:
    """Cells ordered by radius; equal radii by the fixed direction, then index."""
    half = grid.h / 2.0
    keys = []
    for i, x in enumerate(grid.centers):
        k = [int(round(c / half)) for c in x]
        r2 = sum(a * a for a in k)
        proj = sum(a * d for a, d in zip(k, _DIRECTION))
        keys.append((r2, proj, i))
    return [i for _, _, i in sorted(keys)]


def _cap_ranking(na: int) -> list[int]:
    """Angle indices ordered by |theta|, the positive angle first on ties."""
    keys = []
    for a in range(na):
        dist = min(a, na - a)
        negative = 1 if 2 * a > na else 0
        keys.append((dist, negative, a))
    return [a for _, _, a in sorted(keys)]


def _layer_cake(values: list[float], ranking: list[int]) -> list[float]:
    """Replace each super-level set ``{v >= t}`` by the first cells of the
    ranking and keep, at each cell, the highest level that covers it."""
    out = [0.0] * len(values)
    for t in sorted(set(values)):
        count = sum(1 for v in values if v >= t)
        for i in ranking[:count]:
            out[i] = max(out[i], t)
    return out


def oracle_symmetrize(u):
    """Layer-cake reconstruction of ``|u|*``: Schwarz on a Cartesian ball
    grid, ring-wise caps on a polar annulus grid."""
    grid = u.grid
    vals = [abs(float(a)) for a in u.values]
    if grid.domain.shape.value == "ball":
        out = _layer_cake(vals, _schwarz_ranking(grid))
    else:
        na = grid.angular_steps
        ranking = _cap_ranking(na)
        out = []
        for r in range(grid.radial_steps):
            out.extend(_layer_cake(vals[r * na:(r + 1) * na], ranking))
    return u.with_values(np.array(out))


# ------------------------------------------------------------ lattice
@dataclass(frozen=True)
class LatticeSpec:
    """``value_levels`` equally spaced values on ``[0, top]`` in each of
    ``cell_count`` cells, enumerated lexicographically."""

    cell_count: int
    value_levels: int
    top: float = 1.0

    def __post_init__(self) -> None:
        if not 1 <= self.cell_count <= MAX_CELLS:
            raise ValueError(f"cell_count must be in 1..{MAX_CELLS}")
        if not 2 <= self.value_levels <= MAX_LEVELS:
            raise ValueError(f"value_levels must be in 2..{MAX_LEVELS}")
        if self.states > MAX_STATES:
            raise ValueError(f"{self.states} states exceed the limit {MAX_STATES}")

    @property
    def states(self) -> int:
        return self.value_levels ** self.cell_count

    @property
    def levels(self) -> np.ndarray:
        return np.linspace(0.0, self.top, self.value_levels)

    def enumerate(self) -> np.ndarray:
        """All states, shape ``(states, cell_count)``."""
        lv = self.levels
        return np.array([[lv[i] for i in idx]
                         for idx in itertools.product(range(self.value_levels), repeat=self.cell_count)])


def _difference_operators(grid) -> list[np.ndarray]:
    """Dense one-sided difference matrices (zero outside) built from a
    coordinate lookup, one per (combination, axis)."""
    centers = np.asarray(grid.centers)
    n, N = centers.shape
    h = grid.spacing
    where = {tuple(np.round(c / h * 2).astype(int)): i for i, c in enumerate(centers)}
    mats = []
    for combo in itertools.product((1, -1), repeat=N):
        for axis in range(N):
            D = np.zeros((n, n))
            for i, c in enumerate(centers):
                key = list(np.round(c / h * 2).astype(int))
                key[axis] += 2 * combo[axis]
                j = where.get(tuple(key), -1)
                D[i, i] -= combo[axis] / h
                if j >= 0:
                    D[i, j] += combo[axis] / h
            mats.append(D)
    return mats


def oracle_w11(grid) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized discrete ``W^{1,1}`` norm for a Cartesian grid: the cell
    average over the ``2^N`` one-sided gradients of their Euclidean length."""
    if grid.mode.value != "cartesian":
        raise ValueError("oracle norm is implemented for Cartesian grids")
    N = grid.dimension
    mats = _difference_operators(grid)
    m = np.asarray(grid.measures)

    def norm(a: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(a)
        total = np.zeros(a.shape[:-1])
        for c in range(2**N):
            sq = sum((a @ mats[c * N + i].T) ** 2 for i in range(N))
            total = total + np.sqrt(sq) @ m
        return total / 2**N

    return norm


def oracle_ekeland(J, u, rho: float, sigma: float, lattice: LatticeSpec,
                   norm: Callable[[np.ndarray], np.ndarray] | None = None) -> frozenset:
    """Every lattice state ``v`` with ``J(v) <= J(u)`` and
    ``J(w) >= J(v) - sigma ||w - v||`` for all lattice states ``w``.

    ``J`` is either a callable on value arrays or an object with a
    ``value`` method; ``norm`` defaults to :func:`oracle_w11` on ``u``'s
    grid.  States are returned as tuples of values.  Raises
    :class:`EmptyAdmissible` when ``J(u)`` exceeds the lattice minimum by
    more than ``rho * sigma``.
    """
    f = J.value if hasattr(J, "value") else J
    states = lattice.enumerate()
    if states.shape[1] != u.grid.size:
        raise ValueError("lattice cell count differs from the grid")
    if norm is None:
        norm = oracle_w11(u.grid)
    fs = np.array([f(s) for s in states])
    f_u = f(np.asarray(u.values, dtype=float))
    if f_u > fs.min() + rho * sigma:
        raise EmptyAdmissible(
            f"J(u) - min J = {f_u - fs.min():.6g} exceeds rho*sigma = {rho * sigma:.6g}")
    admissible = []
    for k, v in enumerate(states):
        if fs[k] > f_u:
            continue
        d = norm(states - v)
        if np.all(fs >= fs[k] - sigma * d):
            admissible.append(tuple(float(a) for a in v))
    return frozenset(admissible)
