"""Domains, their discretizations, and the admissible half-space classes.

Two domains are supported: a ball centred at the origin and an annulus
centred at the origin.  A ball is discretized on a Cartesian lattice
(N = 2 or 3), an annulus either on a Cartesian lattice or, for N = 2, on a
polar (ring x sector) grid.

Half-spaces use the closed convention ``H = {x : x.e <= t}``.  For a ball
the admissible class is every half-space containing the origin (``t >= 0``);
for an annulus it is every half-space whose boundary passes through the
origin and which contains the positive x1-axis (``t = 0``, ``e.e1 <= 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ClassViolation, EmptyClass

MEMBERSHIP_TOL = 1e-14
_SNAP_TOL = 1e-7


class Shape(str, Enum):
    BALL = "ball"
    ANNULUS = "annulus"


class GridMode(str, Enum):
    CARTESIAN = "cartesian"
    POLAR = "polar"


@dataclass(frozen=True)
class DomainSpec:
    """A ball (``inner_radius == 0``) or annulus centred at the origin."""

    shape: Shape
    dimension: int = 2
    outer_radius: float = 1.0
    inner_radius: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", Shape(self.shape))
        if int(self.dimension) != self.dimension or self.dimension < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dimension}")
        if self.dimension > 3:
            raise ValueError("only dimensions 2 and 3 are supported")
        if not self.outer_radius > 0:
            raise ValueError("outer_radius must be positive")
        if self.shape is Shape.BALL and self.inner_radius != 0:
            raise ValueError("a ball has inner_radius 0")
        if self.shape is Shape.ANNULUS and not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("an annulus needs 0 < inner_radius < outer_radius")

    @classmethod
    def ball(cls, dimension: int = 2, radius: float = 1.0) -> "DomainSpec":
        return cls(Shape.BALL, dimension, radius, 0.0)

    @classmethod
    def annulus(cls, dimension: int = 2, inner: float = 0.5, outer: float = 1.0) -> "DomainSpec":
        return cls(Shape.ANNULUS, dimension, outer, inner)

    @property
    def measure(self) -> float:
        n = self.dimension
        unit_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        return unit_ball * (self.outer_radius**n - self.inner_radius**n)

    def contains_points(self, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        return (r <= self.outer_radius + 1e-12) & (r >= self.inner_radius - 1e-12)


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space ``{x : x.normal <= offset}``."""

    normal: tuple[float, ...]
    offset: float = 0.0

    def __post_init__(self) -> None:
        e = tuple(float(c) for c in self.normal)
        object.__setattr__(self, "normal", e)
        object.__setattr__(self, "offset", float(self.offset))
        if abs(math.sqrt(sum(c * c for c in e)) - 1.0) > 1e-12:
            raise ValueError(f"half-space normal must be a unit vector, got {e}")

    @classmethod
    def from_direction(cls, direction: Sequence[float], offset: float = 0.0) -> "HalfSpace":
        d = np.asarray(direction, dtype=float)
        return cls(tuple(d / np.linalg.norm(d)), offset)

    @property
    def e(self) -> np.ndarray:
        return np.asarray(self.normal)

    def __str__(self) -> str:
        comps = ", ".join(f"{c:+.4f}" for c in self.normal)
        return f"H[e=({comps}), t={self.offset:.6g}]"


def contains(H: HalfSpace, x) -> np.ndarray | bool:
    """True where ``x.e <= t`` (with a 1e-14 boundary tolerance)."""
    x = np.asarray(x, dtype=float)
    inside = x @ H.e <= H.offset + MEMBERSHIP_TOL
    return bool(inside) if np.ndim(inside) == 0 else inside


def reflect(H: HalfSpace, x) -> np.ndarray:
    """Mirror image of ``x`` across the boundary hyperplane of ``H``."""
    x = np.asarray(x, dtype=float)
    e = H.e
    dist = x @ e - H.offset
    return x - 2.0 * np.multiply.outer(dist, e)


def in_class(domain: DomainSpec, H: HalfSpace) -> bool:
    if len(H.normal) != domain.dimension:
        return False
    if domain.shape is Shape.BALL:
        return H.offset >= -MEMBERSHIP_TOL
    return abs(H.offset) <= MEMBERSHIP_TOL and H.normal[0] <= MEMBERSHIP_TOL


def require_class(domain: DomainSpec, H: HalfSpace) -> None:
    if not in_class(domain, H):
        raise ClassViolation(f"{H} is not admissible for a {domain.shape.value} domain")


def sample_halfspace(domain: DomainSpec, rng_seed: int) -> HalfSpace:
    """Draw a random admissible half-space, deterministic in ``rng_seed``."""
    rng = np.random.default_rng(rng_seed)
    e = rng.standard_normal(domain.dimension)
    e /= np.linalg.norm(e)
    if domain.shape is Shape.BALL:
        return HalfSpace(tuple(e), float(rng.uniform(0.0, domain.outer_radius)))
    e[0] = -abs(e[0])
    return HalfSpace(tuple(e), 0.0)


# Generic direction used to order cells of equal radius in the Schwarz
# rearrangement.  Its components are rationally independent, so no two
# distinct lattice points have equal projections.  Cells with the smaller
# projection rank first, so ties favour negative coordinates and the
# half-spaces {x_i <= 0} are tie-consistent.
_TIE_DIRECTION = np.array([1.0, math.sqrt(2.0), math.sqrt(3.0)])


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centred discretization of a domain.

    Use :meth:`cartesian` or :meth:`polar` to build one.  ``centers`` has
    shape ``(cells, N)`` and ``measures`` shape ``(cells,)``.
    """

    domain: DomainSpec
    mode: GridMode
    centers: np.ndarray
    measures: np.ndarray
    # cartesian
    n: int = 0
    h: float = 0.0
    lattice: np.ndarray | None = None  # doubled integer coordinates
    box_index: np.ndarray | None = None
    # polar
    radial_steps: int = 0
    angular_steps: int = 0
    ring: np.ndarray | None = None
    angle_index: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------------ build
    @classmethod
    def cartesian(cls, domain: DomainSpec, n: int = 64) -> "Grid":
        """``n`` cells per axis across the box ``[-R, R]^N``."""
        if n < 2:
            raise ValueError("need at least 2 cells per axis")
        N = domain.dimension
        R = domain.outer_radius
        h = 2.0 * R / n
        axes = [np.arange(n)] * N
        ks = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, N)
        c = 2 * ks - (n - 1)
        r2 = (c * c).sum(axis=1)
        keep = r2 <= n * n
        if domain.shape is Shape.ANNULUS:
            keep &= r2 >= (n * domain.inner_radius / R) ** 2
        box_index = np.full(n**N, -1, dtype=np.int64)
        box_index[np.flatnonzero(keep)] = np.arange(int(keep.sum()))
        lattice = c[keep].astype(np.int64)
        centers = lattice * (h / 2.0)
        measures = np.full(len(lattice), h**N)
        for arr in (centers, measures, lattice, box_index):
            arr.setflags(write=False)
        return cls(domain, GridMode.CARTESIAN, centers, measures, n=n, h=h,
                   lattice=lattice, box_index=box_index.reshape((n,) * N))

    @classmethod
    def polar(cls, domain: DomainSpec, radial_steps: int = 32, angular_steps: int = 64) -> "Grid":
        """Ring x sector grid of a 2-D annulus; angle 0 is a cell centre."""
        if domain.dimension != 2:
            raise ValueError("polar grids are only defined for N = 2")
        if domain.shape is not Shape.ANNULUS:
            raise ValueError("polar grids are only supported on an annulus")
        r0, R = domain.inner_radius, domain.outer_radius
        dr = (R - r0) / radial_steps
        dth = 2.0 * math.pi / angular_steps
        ring = np.repeat(np.arange(radial_steps), angular_steps)
        angle_index = np.tile(np.arange(angular_steps), radial_steps)
        radii = r0 + (ring + 0.5) * dr
        theta = angle_index * dth
        centers = np.column_stack([radii * np.cos(theta), radii * np.sin(theta)])
        measures = radii * dr * dth
        for arr in (centers, measures, ring, angle_index):
            arr.setflags(write=False)
        return cls(domain, GridMode.POLAR, centers, measures,
                   radial_steps=radial_steps, angular_steps=angular_steps,
                   ring=ring, angle_index=angle_index)

    # ------------------------------------------------------------ properties
    @property
    def size(self) -> int:
        return len(self.measures)

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def dr(self) -> float:
        return (self.domain.outer_radius - self.domain.inner_radius) / self.radial_steps

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.angular_steps

    @property
    def ring_radii(self) -> np.ndarray:
        return self.domain.inner_radius + (np.arange(self.radial_steps) + 0.5) * self.dr

    @property
    def spacing(self) -> float:
        """Characteristic mesh size (``h``, or the radial step on polar grids)."""
        return self.h if self.mode is GridMode.CARTESIAN else self.dr

    @property
    def measure_defect(self) -> float:
        """Relative gap between total cell measure and the continuum measure."""
        return abs(self.measures.sum() - self.domain.measure) / self.domain.measure

    def __repr__(self) -> str:
        if self.mode is GridMode.CARTESIAN:
            res = f"n={self.n}"
        else:
            res = f"{self.radial_steps}x{self.angular_steps}"
        return f"Grid({self.domain.shape.value}, N={self.dimension}, {self.mode.value}, {res}, cells={self.size})"

    def describe(self) -> dict:
        d = {"shape": self.domain.shape.value, "dimension": self.dimension,
             "outer_radius": self.domain.outer_radius,
             "inner_radius": self.domain.inner_radius, "mode": self.mode.value,
             "cells": self.size}
        if self.mode is GridMode.CARTESIAN:
            d["n"] = self.n
        else:
            d["radial_steps"] = self.radial_steps
            d["angular_steps"] = self.angular_steps
        return d

    # ------------------------------------------------------------ neighbours
    def neighbors(self, axis: int, step: int) -> tuple[np.ndarray, np.ndarray]:
        """Index of the neighbour one step along ``axis`` and the step length.

        Missing neighbours (outside the domain) are reported as ``-1``; the
        caller treats them as zero (Dirichlet extension).  On polar grids
        axis 0 is radial and axis 1 angular (periodic).
        """
        key = ("nb", axis, step)
        if key in self._cache:
            return self._cache[key]
        if self.mode is GridMode.CARTESIAN:
            k = (self.lattice + (self.n - 1)) // 2
            k = k.copy()
            k[:, axis] += step
            ok = (k[:, axis] >= 0) & (k[:, axis] < self.n)
            idx = np.full(self.size, -1, dtype=np.int64)
            idx[ok] = self.box_index[tuple(k[ok].T)]
            length = np.full(self.size, self.h)
        else:
            na = self.angular_steps
            if axis == 0:
                ring = self.ring + step
                ok = (ring >= 0) & (ring < self.radial_steps)
                idx = np.where(ok, ring * na + self.angle_index, -1)
                length = np.full(self.size, self.dr)
            else:
                idx = self.ring * na + (self.angle_index + step) % na
                length = self.ring_radii[self.ring] * self.dtheta
        out = (idx.astype(np.int64), length)
        self._cache[key] = out
        return out

    # ------------------------------------------------ symmetrization ordering
    @property
    def schwarz_order(self) -> np.ndarray:
        """Cell indices by increasing radius; equal radii by a fixed direction."""
        if "schwarz" not in self._cache:
            if self.mode is not GridMode.CARTESIAN:
                raise ValueError("Schwarz ordering needs equal-measure (Cartesian) cells")
            r2 = (self.lattice * self.lattice).sum(axis=1)
            proj = self.lattice @ _TIE_DIRECTION[: self.dimension]
            order = np.lexsort((np.arange(self.size), proj, r2))
            order.setflags(write=False)
            self._cache["schwarz"] = order
        return self._cache["schwarz"]

    @property
    def cap_order(self) -> np.ndarray:
        """Angle indices by increasing |theta|, positive angle first on ties."""
        if "cap" not in self._cache:
            if self.mode is not GridMode.POLAR:
                raise ValueError("cap ordering needs a polar grid")
            a = np.arange(self.angular_steps)
            dist = np.minimum(a, self.angular_steps - a)
            negative = (2 * a > self.angular_steps).astype(int)
            order = np.lexsort((negative, dist))
            order.setflags(write=False)
            self._cache["cap"] = order
        return self._cache["cap"]

    def symmetric_rank(self) -> np.ndarray | None:
        """Position of each cell in the symmetrization order (``None`` if the
        grid has no symmetrization)."""
        if "rank" not in self._cache:
            rank = None
            if self.domain.shape is Shape.BALL and self.mode is GridMode.CARTESIAN:
                rank = np.empty(self.size, dtype=np.int64)
                rank[self.schwarz_order] = np.arange(self.size)
            elif self.mode is GridMode.POLAR:
                pos = np.empty(self.angular_steps, dtype=np.int64)
                pos[self.cap_order] = np.arange(self.angular_steps)
                rank = pos[self.angle_index]
            self._cache["rank"] = rank
        return self._cache["rank"]

    # ------------------------------------------------------------ reflection
    def partner(self, H: HalfSpace) -> np.ndarray | None:
        """Cell index of the mirror image of every cell centre.

        Returns ``None`` when the reflection does not map the lattice onto
        itself.  Images that fall outside the domain are reported as ``-1``.
        """
        key = ("partner", H)
        if key in self._cache:
            return self._cache[key]
        y = reflect(H, self.centers)
        out = None
        if self.mode is GridMode.CARTESIAN:
            c = y / (self.h / 2.0)
            ci = np.rint(c)
            parity_ok = np.all(np.mod(ci - (self.n - 1), 2) == 0)
            if np.all(np.abs(c - ci) < _SNAP_TOL) and parity_ok:
                k = ((ci + (self.n - 1)) // 2).astype(np.int64)
                ok = np.all((k >= 0) & (k < self.n), axis=1)
                out = np.full(self.size, -1, dtype=np.int64)
                out[ok] = self.box_index[tuple(k[ok].T)]
        elif abs(H.offset) <= MEMBERSHIP_TOL:
            theta = np.arctan2(y[:, 1], y[:, 0])
            a = theta / self.dtheta
            ai = np.rint(a)
            if np.all(np.abs(a - ai) < _SNAP_TOL):
                a_idx = np.mod(ai.astype(np.int64), self.angular_steps)
                out = self.ring * self.angular_steps + a_idx
        if out is not None:
            out.setflags(write=False)
        self._cache[key] = out
        return out

    def inside_mask(self, H: HalfSpace) -> np.ndarray:
        key = ("inside", H)
        if key not in self._cache:
            m = np.asarray(contains(H, self.centers))
            m.setflags(write=False)
            self._cache[key] = m
        return self._cache[key]


def _candidate_halfspaces(grid: Grid) -> list[HalfSpace]:
    N = grid.dimension
    R = grid.domain.outer_radius
    cands: list[HalfSpace] = []
    if grid.mode is GridMode.CARTESIAN:
        eye = np.eye(N)
        ball = grid.domain.shape is Shape.BALL
        axis_offsets = [k * grid.h / 2.0 for k in range(0, 2 * grid.n)] if ball else [0.0]
        diag_offsets = [m * grid.h / math.sqrt(2.0) for m in range(0, 2 * grid.n)] if ball else [0.0]
        for i in range(N):
            for sgn in (1.0, -1.0):
                for t in axis_offsets:
                    if t < R:
                        cands.append(HalfSpace(tuple(sgn * eye[i]), t))
        for i in range(N):
            for j in range(i + 1, N):
                for si in (1.0, -1.0):
                    for sj in (1.0, -1.0):
                        e = (si * eye[i] + sj * eye[j]) / math.sqrt(2.0)
                        for t in diag_offsets:
                            if t < R:
                                cands.append(HalfSpace(tuple(e), t))
    else:
        # normals at every multiple of half the angular step
        for m in range(2 * grid.angular_steps):
            psi = m * math.pi / grid.angular_steps
            e = (math.cos(psi), math.sin(psi))
            cands.append(HalfSpace(e, 0.0))
    return cands


def is_grid_compatible(grid: Grid, H: HalfSpace) -> bool:
    """Reflection permutes the lattice and the discrete symmetrization is
    a fixed point of the polarization (see :func:`grid_compatible_halfspaces`)."""
    if not in_class(grid.domain, H):
        return False
    partner = grid.partner(H)
    if partner is None:
        return False
    rank = grid.symmetric_rank()
    if rank is None:
        return True
    strict = grid.centers @ H.e < H.offset - 1e-9
    sel = strict & (partner >= 0)
    return bool(np.all(rank[sel] < rank[partner[sel]]))


def grid_compatible_halfspaces(grid: Grid) -> list[HalfSpace]:
    """Admissible half-spaces whose reflection maps cell centres onto cell
    centres exactly.

    Cartesian: axis-aligned hyperplanes through cell-centre planes or
    mid-planes and 45 degree diagonals (through the origin, and offset for
    a ball).  Polar: lines through the origin at multiples of half the
    angular step.

    Half-spaces through the origin pair cells of equal radius (ball) or
    equal |theta| (annulus); the discrete rearrangements break those ties in
    one fixed direction, so only the half-spaces agreeing with that
    direction are kept.  This keeps ``(u*)^H = u*`` exact on the grid.
    """
    key = "compatible"
    if key not in grid._cache:
        out = [H for H in _candidate_halfspaces(grid) if is_grid_compatible(grid, H)]
        grid._cache[key] = tuple(out)
    out = list(grid._cache[key])
    if not out:
        raise EmptyClass(f"no grid-compatible admissible half-space for {grid!r}")
    return out


def axis_aligned(H: HalfSpace) -> bool:
    return sum(abs(c) > 1e-12 for c in H.normal) == 1
