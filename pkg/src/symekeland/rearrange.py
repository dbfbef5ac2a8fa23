"""Polarization, Schwarz and cap symmetrization, and discrete norms.

Everything operates on :class:`GridFunction` values, zero-extended outside
the domain.  For grid-compatible half-spaces (see
:func:`symekeland.geometry.grid_compatible_halfspaces`) polarization is an
exact permutation of cell values; for other admissible half-spaces the
mirror value is read by multilinear interpolation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from . import differences
from .errors import DomainMismatch, GridMismatch
from .geometry import (
    Grid,
    GridMode,
    HalfSpace,
    Shape,
    grid_compatible_halfspaces,
    reflect,
    require_class,
)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Scalar field with one value per grid cell."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def from_callable(cls, grid: Grid, f: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, f(grid.centers))

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _raw(other))

    def __sub__(self, other):
        return self.with_values(self.values - _raw(other))

    def __mul__(self, k: float):
        return self.with_values(self.values * k)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def equals(self, other: "GridFunction") -> bool:
        """Bit-exact equality of values."""
        return bool(np.array_equal(self.values, other.values))

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0))


def _raw(x):
    return x.values if isinstance(x, GridFunction) else x


# ------------------------------------------------------------------ Theta
def theta(u: GridFunction) -> GridFunction:
    """Pointwise absolute value; the identity on nonnegative functions."""
    if u.is_nonnegative():
        return u
    return u.with_values(np.abs(u.values))


# ----------------------------------------------------------- polarization
def _two_point(inside: np.ndarray, own: np.ndarray, mirror: np.ndarray) -> np.ndarray:
    return np.where(inside, np.maximum(own, mirror), np.minimum(own, mirror))


def _interpolate_mirror(grid: Grid, values: np.ndarray, H: HalfSpace) -> np.ndarray:
    y = reflect(H, grid.centers)
    if grid.mode is GridMode.CARTESIAN:
        box = np.zeros(grid.box_index.shape)
        box[grid.box_index >= 0] = values[grid.box_index[grid.box_index >= 0]]
        coords = y / grid.h + (grid.n - 1) / 2.0
        out = ndimage.map_coordinates(box, coords.T, order=1, mode="constant", cval=0.0)
        # cells whose image left the domain read zero
        out[~grid.domain.contains_points(y)] = 0.0
    else:
        na = grid.angular_steps
        a = np.mod(np.arctan2(y[:, 1], y[:, 0]) / grid.dtheta, na)
        lo = np.floor(a).astype(np.int64)
        w = a - lo
        base = grid.ring * na
        out = (1 - w) * values[base + lo % na] + w * values[base + (lo + 1) % na]
    return np.maximum(out, 0.0)


def polarize(u: GridFunction, H: HalfSpace) -> GridFunction:
    """Two-point rearrangement of ``|u|`` with respect to ``H``.

    Inside ``H`` each cell keeps the larger of its value and its mirror
    value, outside the smaller.  Raises :class:`ClassViolation` for a
    half-space outside the domain's admissible class.
    """
    grid = u.grid
    require_class(grid.domain, H)
    v = theta(u).values
    partner = grid.partner(H)
    if partner is None:
        mirror = _interpolate_mirror(grid, v, H)
    else:
        mirror = np.where(partner >= 0, v[partner], 0.0)
    return u.with_values(_two_point(grid.inside_mask(H), v, mirror))


# --------------------------------------------------------- symmetrization
def _schwarz_assign(order: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[order] = np.sort(values)[::-1]
    return out


def schwarz_symmetrize(u: GridFunction) -> GridFunction:
    """Equimeasurable radially non-increasing rearrangement on a ball."""
    if u.grid.domain.shape is not Shape.BALL:
        raise DomainMismatch("Schwarz symmetrization needs a ball")
    return u.with_values(_schwarz_assign(u.grid.schwarz_order, u.values))


def cap_symmetrize(u: GridFunction) -> GridFunction:
    """Ring-by-ring rearrangement, non-increasing in the angle from +x1."""
    grid = u.grid
    if grid.domain.shape is not Shape.ANNULUS:
        raise DomainMismatch("cap symmetrization needs an annulus")
    if grid.mode is not GridMode.POLAR:
        raise GridMismatch("cap symmetrization needs a polar grid")
    rings = u.values.reshape(grid.radial_steps, grid.angular_steps)
    out = np.empty_like(rings)
    out[:, grid.cap_order] = np.sort(rings, axis=1)[:, ::-1]
    return u.with_values(out.ravel())


def symmetrize(u: GridFunction) -> GridFunction:
    """``|u|*``: Schwarz on a ball, cap symmetrization on an annulus."""
    v = theta(u)
    if u.grid.domain.shape is Shape.BALL:
        return schwarz_symmetrize(v)
    return cap_symmetrize(v)


def defect_exponent(grid: Grid) -> float:
    N = grid.dimension
    return N / (N - 1)


def symmetry_defect(u: GridFunction) -> float:
    """``|| |u| - |u|* ||`` in the discrete ``L^{N/(N-1)}`` norm."""
    v = theta(u)
    return lq_norm(v - symmetrize(v), defect_exponent(u.grid))


# ------------------------------------------------------------------ norms
def lq_norm(u: GridFunction, q: float) -> float:
    if q < 1:
        raise ValueError("q must be >= 1")
    a = np.abs(u.values)
    return float(np.sum(u.grid.measures * a**q) ** (1.0 / q))


def linf_norm(u: GridFunction) -> float:
    return float(np.max(np.abs(u.values))) if u.grid.size else 0.0


def gradient_magnitudes(u: GridFunction) -> np.ndarray:
    """Euclidean length of each one-sided gradient, shape ``(2**N, cells)``."""
    return np.linalg.norm(differences.gradients(u.grid, u.values), axis=2)


def w1p_seminorm(u: GridFunction, p: float) -> float:
    """``(int |Du|^p)^(1/p)`` averaged over the one-sided stencils."""
    if p < 1:
        raise ValueError("p must be >= 1")
    g = gradient_magnitudes(u)
    return float(np.sum(u.grid.measures * np.mean(g**p, axis=0)) ** (1.0 / p))


def w11_seminorm(u: GridFunction) -> float:
    """``int |Du|``; a norm on zero-extended grid functions."""
    g = gradient_magnitudes(u)
    return float(np.sum(u.grid.measures * np.mean(g, axis=0)))


def norm(u: GridFunction, which: str, exponent: float | None = None) -> float:
    """Dispatch on ``which`` in ``{"Lq", "Linf", "W11", "W1p"}``."""
    if which == "Lq":
        return lq_norm(u, exponent)
    if which == "Linf":
        return linf_norm(u)
    if which == "W11":
        return w11_seminorm(u)
    if which == "W1p":
        return w1p_seminorm(u, exponent)
    raise ValueError(f"unknown norm {which!r}")


# --------------------------------------------------- iterated polarization
M_DEFAULT = 500
ITERATION_CAP = 10 * M_DEFAULT


@dataclass(frozen=True)
class FixedCount:
    m: int


@dataclass(frozen=True)
class DefectBelow:
    rho: float


@dataclass(frozen=True)
class PolarizationSchedule:
    """Ordered half-spaces (cycled if exhausted) and a stopping rule."""

    halfspaces: tuple[HalfSpace, ...]
    stopping: FixedCount | DefectBelow = FixedCount(M_DEFAULT)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "halfspaces", tuple(self.halfspaces))
        if not self.halfspaces:
            raise ValueError("schedule needs at least one half-space")

    @classmethod
    def random(cls, grid: Grid, count: int, stopping=None, rng_seed: int = 0) -> "PolarizationSchedule":
        """``count`` half-spaces drawn uniformly from the grid-compatible pool."""
        pool = grid_compatible_halfspaces(grid)
        rng = np.random.default_rng(rng_seed)
        picks = rng.integers(0, len(pool), size=count)
        stopping = FixedCount(count) if stopping is None else stopping
        return cls(tuple(pool[i] for i in picks), stopping, rng_seed)


@dataclass
class PolarizationRun:
    u: GridFunction
    trace: list[float]
    applied: list[HalfSpace] = field(default_factory=list)
    exhausted: bool = False

    @property
    def steps(self) -> int:
        return len(self.trace) - 1


def iterate_polarizations(
    u: GridFunction,
    schedule: PolarizationSchedule,
    accept: Callable[[GridFunction, GridFunction, HalfSpace], bool] | None = None,
    stall_limit: int | None = None,
) -> PolarizationRun:
    """Apply the schedule's polarizations in order.

    ``trace[k]`` is the symmetry defect after ``k`` steps (``trace[0]`` is
    the initial defect).  With ``DefectBelow(rho)`` the loop stops once the
    defect drops below ``rho`` or after :data:`ITERATION_CAP` steps, in
    which case ``exhausted`` is set.  ``accept`` may veto individual steps;
    a vetoed step leaves the iterate unchanged.  With ``stall_limit`` the
    loop also stops, flagged ``exhausted``, after that many consecutive
    steps that were vetoed or changed nothing.
    """
    v = theta(u)
    star = symmetrize(v)
    q = defect_exponent(u.grid)
    d = lq_norm(v - star, q)
    run = PolarizationRun(v, [d])
    stop = schedule.stopping
    if isinstance(stop, DefectBelow):
        limit = ITERATION_CAP
        if d < stop.rho:
            return run
    else:
        limit = stop.m
    hs = schedule.halfspaces
    idle = 0
    for k in range(limit):
        H = hs[k % len(hs)]
        w = polarize(v, H)
        if w.equals(v) or (accept is not None and not accept(v, w, H)):
            run.trace.append(d)
            idle += 1
            if stall_limit is not None and idle >= stall_limit:
                run.exhausted = True
                break
            continue
        idle = 0
        v = w
        run.applied.append(H)
        if u.grid.partner(H) is None:
            star = symmetrize(v)
        d = lq_norm(v - star, q)
        run.trace.append(d)
        if isinstance(stop, DefectBelow) and d < stop.rho:
            break
    else:
        run.exhausted = isinstance(stop, DefectBelow)
    run.u = v
    return run


def compose(u: GridFunction, halfspaces: Sequence[HalfSpace]) -> GridFunction:
    """``u^{H_1 H_2 ... H_m}``: polarize by each half-space in turn."""
    v = theta(u)
    for H in halfspaces:
        v = polarize(v, H)
    return v


# -------------------------------------------------------------------- i/o
def save_csv(u: GridFunction, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index", "value"])
        for i, x in enumerate(u.values):
            w.writerow([i, repr(float(x))])


def load_csv(grid: Grid, path) -> GridFunction:
    values = np.zeros(grid.size)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            values[int(row["cell_index"])] = float(row["value"])
    return GridFunction(grid, values)


def save_binary(u: GridFunction, path) -> None:
    np.asarray(u.values, dtype="<f8").tofile(path)


def load_binary(grid: Grid, path) -> GridFunction:
    return GridFunction(grid, np.fromfile(path, dtype="<f8"))


def write_defect_trace(trace: Sequence[float], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "defect"])
        for k, d in enumerate(trace):
            w.writerow([k, repr(float(d))])
