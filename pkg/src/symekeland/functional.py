"""Integrands ``j(x, s, xi)``, their growth data, and discrete functionals.

The discrete functional is

    J(u) = sum_cells  m_x * mean_s j(x, u(x), D^s u(x))

where ``D^s`` runs over the ``2**N`` one-sided gradients of
:mod:`symekeland.differences`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.sparse.linalg import eigsh

from . import differences
from .errors import GrowthParamError, NonFinite, SymEkelandError
from .geometry import Grid, grid_compatible_halfspaces
from .rearrange import GridFunction, lq_norm, polarize, w1p_seminorm

XI_CLAMP = 1e8


# ----------------------------------------------------------------- growth
@dataclass(frozen=True)
class GrowthParams:
    """Constants of the two-sided growth bound

        alpha |xi|^p - phi2 |s|^g2 <= j(x, s, xi) <= beta |xi|^p + phi0 + phi1 |s|^g1

    ``phi0``, ``phi1``, ``phi2`` are scalars or per-cell arrays.
    """

    alpha: float
    beta: float
    p: float
    dimension: int = 2
    gamma1: float = 0.0
    gamma2: float = 0.0
    phi0: float | np.ndarray = 0.0
    phi1: float | np.ndarray = 0.0
    phi2: float | np.ndarray = 0.0
    r0: float = 2.0
    r1: float = 2.0
    r2: float = 3.0

    def __post_init__(self) -> None:
        self.validate()

    @property
    def p_star(self) -> float:
        N = self.dimension
        return N * self.p / (N - self.p)

    @property
    def r1_conj(self) -> float:
        return self.r1 / (self.r1 - 1.0)

    @property
    def r2_conj(self) -> float:
        return self.r2 / (self.r2 - 1.0)

    @property
    def regime(self) -> str:
        """``"W1q"`` if ``r0 < N/p`` (higher integrability), else ``"Linf"``."""
        return "W1q" if self.r0 < self.dimension / self.p else "Linf"

    def validate(self) -> None:
        N, p = self.dimension, self.p
        checks = [
            (self.alpha > 0, "α > 0"),
            (self.beta > 0, "β > 0"),
            (1 < p < N, "1 < p < N"),
            (self.gamma1 >= 0, "γ₁ ≥ 0"),
            (self.gamma2 >= 0, "γ₂ ≥ 0"),
            (self.r0 > 1, "r₀ > 1"),
            (self.r1 > N / p, "r₁ > N/p"),
            (self.r2 > N, "r₂ > N"),
            (self.r0 != N / p, "r₀ ≠ N/p"),
        ]
        for ok, what in checks:
            if not ok:
                raise GrowthParamError(f"growth constraint violated: {what}")
        if not self.gamma1 < self.p_star * (self.r1 - 1) / self.r1:
            raise GrowthParamError(
                "growth constraint violated: γ₁ < p*·(r₁−1)/r₁ "
                f"(γ₁={self.gamma1}, bound={self.p_star * (self.r1 - 1) / self.r1:.6g})")
        g2_max = min(p, N / (N - 1) * (self.r2 - 1) / self.r2)
        if not self.gamma2 < g2_max:
            raise GrowthParamError(
                "growth constraint violated: γ₂ < min{p, (N/(N−1))·(r₂−1)/r₂} "
                f"(γ₂={self.gamma2}, bound={g2_max:.6g})")
        for name in ("phi0", "phi1", "phi2"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise GrowthParamError(f"growth constraint violated: {name} ≥ 0")

    def lower(self, s: np.ndarray, xi_norm: np.ndarray, cell: np.ndarray | None = None) -> np.ndarray:
        phi2 = _at(self.phi2, cell)
        return self.alpha * xi_norm**self.p - phi2 * np.abs(s) ** self.gamma2

    def upper(self, s: np.ndarray, xi_norm: np.ndarray, cell: np.ndarray | None = None) -> np.ndarray:
        phi0, phi1 = _at(self.phi0, cell), _at(self.phi1, cell)
        return self.beta * xi_norm**self.p + phi0 + phi1 * np.abs(s) ** self.gamma1


def _at(phi, cell):
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0 or cell is None:
        return phi
    return phi[cell]


def weight_function(grid: Grid, phi) -> GridFunction:
    return GridFunction(grid, np.broadcast_to(np.asarray(phi, dtype=float), (grid.size,)))


# -------------------------------------------------------------- integrand
Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Integrand:
    """``eval(x, s, xi)`` is vectorized over rows: ``x`` is ``(n, N)``,
    ``s`` is ``(n,)``, ``xi`` is ``(n, N)``.

    ``derivative`` (optional) returns ``(dj/ds, dj/dxi)`` with the same
    shapes as ``s`` and ``xi``; without it derivatives are taken by central
    differences.
    """

    name: str
    eval: Evaluator
    growth: GrowthParams
    radial_flag: bool = False
    derivative: Callable | None = None
    params: dict = field(default_factory=dict)
    nonconvexity_witness: tuple[float, float] | None = None

    def __call__(self, x, s, xi):
        return self.eval(np.atleast_2d(x), np.atleast_1d(s), np.atleast_2d(xi))

    def partials(self, x, s, xi):
        if self.derivative is not None:
            return self.derivative(x, s, xi)
        hs = 1e-6 * (1.0 + np.abs(s))
        js = (self.eval(x, s + hs, xi) - self.eval(x, s - hs, xi)) / (2 * hs)
        jxi = np.empty_like(xi)
        for i in range(xi.shape[1]):
            hx = 1e-6 * (1.0 + np.abs(xi[:, i]))
            xp, xm = xi.copy(), xi.copy()
            xp[:, i] += hx
            xm[:, i] -= hx
            jxi[:, i] = (self.eval(x, s, xp) - self.eval(x, s, xm)) / (2 * hx)
        return js, jxi


def radial_integrand(name, j0, dj0_ds, dj0_dr, growth, **meta) -> Integrand:
    """Build ``j(x, s, xi) = j0(s, |xi|)`` with analytic derivatives."""

    def ev(x, s, xi):
        return j0(s, np.linalg.norm(xi, axis=-1))

    def der(x, s, xi):
        r = np.linalg.norm(xi, axis=-1)
        dr = dj0_dr(s, r)
        safe = np.where(r > 0, r, 1.0)
        jxi = np.where((r > 0)[:, None], (dr / safe)[:, None] * xi, 0.0)
        return dj0_ds(s, r), jxi

    return Integrand(name, ev, growth, radial_flag=True, derivative=der, **meta)


_REGISTRY: dict[str, Callable[..., Integrand]] = {}


def register_integrand(name: str):
    """Decorator registering an integrand factory ``f(grid, **params)``."""

    def deco(factory):
        _REGISTRY[name] = factory
        return factory

    return deco


def integrand_names() -> list[str]:
    return sorted(_REGISTRY)


def integrand_summary(name: str) -> str:
    """First docstring line of a registered factory."""
    doc = (_REGISTRY[name].__doc__ or "").strip()
    return doc.splitlines()[0] if doc else ""


def make_integrand(name: str, grid: Grid, **params) -> Integrand:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown integrand {name!r}; known: {integrand_names()}") from None
    return factory(grid, **params)


def _forcing_growth(grid: Grid, p: float, lam: float, beta: float, **rs) -> GrowthParams:
    # -lam*s is bounded below by -lam|s| and above by lam|s|
    g = 1.0 if lam > 0 else 0.0
    return GrowthParams(alpha=1.0, beta=beta, p=p, dimension=grid.dimension,
                        gamma1=g, gamma2=g, phi1=lam, phi2=lam, **rs)


@register_integrand("power")
def power_integrand(grid: Grid, p: float = 1.5, lam: float = 0.0, **rs) -> Integrand:
    """Convex baseline ``|xi|^p - lam*s``."""
    growth = _forcing_growth(grid, p, lam, 1.0, **rs)
    return radial_integrand(
        "power",
        lambda s, r: r**p - lam * s,
        lambda s, r: np.full_like(s, -lam, dtype=float),
        lambda s, r: p * r ** (p - 1),
        growth, params={"p": p, "lam": lam})


def wiggle_profile(t, p: float):
    """``t^p (1 + sin^2(pi t) / 2)``: the gradient part of the wiggle integrand."""
    t = np.asarray(t, dtype=float)
    return t**p * (1.0 + 0.5 * np.sin(np.pi * t) ** 2)


def find_midpoint_violation(f: Callable, lo: float = 0.0, hi: float = 3.0, n: int = 301):
    """Scan pairs on ``[lo, hi]`` for ``f((a+b)/2) > (f(a)+f(b))/2``.

    Returns the pair with the largest violation, or ``None``.
    """
    t = np.linspace(lo, hi, n)
    ft = f(t)
    a, b = np.meshgrid(t, t, indexing="ij")
    gap = f((a + b) / 2) - (ft[:, None] + ft[None, :]) / 2
    k = np.unravel_index(np.argmax(gap), gap.shape)
    if gap[k] <= 1e-12:
        return None
    return float(t[k[0]]), float(t[k[1]])


@register_integrand("wiggle")
def wiggle_integrand(grid: Grid, p: float = 1.5, lam: float = 0.0, **rs) -> Integrand:
    """Non-convex ``|xi|^p (1 + sin^2(pi|xi|)/2) - lam*s``."""
    growth = _forcing_growth(grid, p, lam, 1.5, **rs)

    def j0(s, r):
        return wiggle_profile(r, p) - lam * s

    def dr(s, r):
        sn, cs = np.sin(np.pi * r), np.cos(np.pi * r)
        return p * r ** (p - 1) * (1 + 0.5 * sn**2) + r**p * np.pi * sn * cs

    return radial_integrand(
        "wiggle", j0, lambda s, r: np.full_like(s, -lam, dtype=float), dr, growth,
        params={"p": p, "lam": lam},
        nonconvexity_witness=find_midpoint_violation(lambda t: wiggle_profile(t, p)))


def builtin_integrands(grid: Grid, p: float = 1.5, lam: float = 0.0) -> list[Integrand]:
    """Every registered integrand instantiated with ``p`` and ``lam``."""
    return [make_integrand(name, grid, p=p, lam=lam) for name in integrand_names()]


# ------------------------------------------------------------- functional
@dataclass(frozen=True, eq=False)
class DiscreteFunctional:
    integrand: Integrand
    grid: Grid
    p_space: float | None = None

    def __post_init__(self) -> None:
        if self.p_space is None:
            object.__setattr__(self, "p_space", self.integrand.growth.p)
        if self.p_space != self.integrand.growth.p:
            raise ValueError("p_space must equal the integrand's growth exponent p")
        if self.integrand.growth.dimension != self.grid.dimension:
            raise ValueError("integrand and grid dimensions differ")

    def _pointwise(self, values: np.ndarray):
        xi = differences.gradients(self.grid, values)
        r = np.linalg.norm(xi, axis=2)
        clamped = r > XI_CLAMP
        if clamped.any():
            xi = np.where(clamped[..., None], xi * (XI_CLAMP / np.maximum(r, 1e-300))[..., None], xi)
        return xi, int(clamped.sum())

    def density(self, values: np.ndarray) -> np.ndarray:
        """Per-cell contribution ``m_x * mean_s j(x, u, D^s u)``."""
        values = np.asarray(values, dtype=float)
        xi, _ = self._pointwise(values)
        x = self.grid.centers
        acc = np.zeros(self.grid.size)
        for g in xi:
            acc += self.integrand.eval(x, values, g)
        dens = self.grid.measures * acc / len(xi)
        if not np.all(np.isfinite(dens)):
            bad = int(np.flatnonzero(~np.isfinite(dens))[0])
            raise NonFinite(f"integrand {self.integrand.name!r} is not finite at cell {bad}")
        return dens

    def value(self, values: np.ndarray) -> float:
        return float(np.sum(self.density(values)))

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Exact gradient of :meth:`value` with respect to the cell values."""
        values = np.asarray(values, dtype=float)
        xi, _ = self._pointwise(values)
        x, m = self.grid.centers, self.grid.measures
        k = len(xi)
        g_s = np.zeros(self.grid.size)
        fields = np.empty_like(xi)
        for idx, g in enumerate(xi):
            js, jxi = self.integrand.partials(x, values, g)
            g_s += js
            fields[idx] = jxi * (m / k)[:, None]
        return m * g_s / k + differences.gradient_adjoint(self.grid, fields)

    def clamp_count(self, values: np.ndarray) -> int:
        return self._pointwise(np.asarray(values, dtype=float))[1]


def evaluate(J: DiscreteFunctional, u: GridFunction, cells: np.ndarray | None = None) -> float:
    """``J(u)``, optionally restricted to a boolean mask or index set of cells."""
    dens = J.density(u.values)
    if cells is not None:
        dens = dens[cells]
    return float(np.sum(dens))


# ---------------------------------------------------------------- checks
@dataclass
class GrowthReport:
    passed: bool
    worst_margin: float
    worst_bound: str
    worst_triple: tuple | None
    samples: int

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"growth check {status}: worst margin {self.worst_margin:.3e} ({self.worst_bound} bound)"


def check_growth(j: Integrand, grid: Grid, samples: int = 10_000, rng_seed: int = 0,
                 s_max: float = 10.0, xi_max: float = 10.0) -> GrowthReport:
    """Sample both growth inequalities at random ``(x, s, xi)`` triples."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    N = grid.dimension
    cell = rng.integers(0, grid.size, samples)
    x = grid.centers[cell]
    s = rng.uniform(-s_max, s_max, samples)
    d = rng.standard_normal((samples, N))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    xi = d * (xi_max * rng.uniform(0, 1, samples) ** (1.0 / N))[:, None]
    r = np.linalg.norm(xi, axis=1)
    val = j.eval(x, s, xi)
    lo = j.growth.lower(s, r, cell)
    hi = j.growth.upper(s, r, cell)
    scale = 1e-12 * (1.0 + np.abs(val) + np.abs(lo) + np.abs(hi))
    m_lo, m_hi = val - lo, hi - val
    k_lo, k_hi = int(np.argmin(m_lo + scale)), int(np.argmin(m_hi + scale))
    if m_lo[k_lo] + scale[k_lo] <= m_hi[k_hi] + scale[k_hi]:
        k, which, margin, tol = k_lo, "lower", m_lo[k_lo], scale[k_lo]
    else:
        k, which, margin, tol = k_hi, "upper", m_hi[k_hi], scale[k_hi]
    passed = bool(margin >= -tol)
    triple = None if passed else (tuple(x[k]), float(s[k]), tuple(xi[k]))
    return GrowthReport(passed, float(margin), which, triple, samples)


def random_bumps(grid: Grid, rng: np.random.Generator, count: int = 3) -> np.ndarray:
    """Smooth nonnegative field: a sum of Gaussian bumps vanishing at the boundary."""
    R = grid.domain.outer_radius
    x = grid.centers
    out = np.zeros(grid.size)
    for _ in range(count):
        c = rng.uniform(-0.6, 0.6, grid.dimension) * R
        w = rng.uniform(0.15, 0.4) * R
        a = rng.uniform(0.2, 1.0)
        out += a * np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * w * w))
    r = np.linalg.norm(x, axis=1)
    return out * np.clip(1 - (r / R) ** 2, 0, None)


@dataclass
class PolarizationReport:
    passed: bool
    trials: int
    violations: int
    worst_excess: float
    tolerance: float
    worst_halfspace: object = None


def check_polarization_monotone(J: DiscreteFunctional, trials: int = 50, rng_seed: int = 0,
                                fields: str = "mixed") -> PolarizationReport:
    """Test ``J(u^H) <= J(u) + tol`` on random nonnegative ``u`` and
    grid-compatible ``H`` with ``tol = 10 h (1 + |J(u)|)``.

    ``worst_excess`` is the largest ``(J(u^H) - J(u)) / (1 + |J(u)|)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = J.grid
    pool = grid_compatible_halfspaces(grid)
    rng = np.random.default_rng(rng_seed)
    slack = 10.0 * grid.spacing
    worst, worst_H, bad = -math.inf, None, 0
    for k in range(trials):
        smooth = fields == "smooth" or (fields == "mixed" and k % 2 == 0)
        vals = random_bumps(grid, rng) if smooth else rng.uniform(0, 1, grid.size)
        H = pool[rng.integers(len(pool))]
        ju = J.value(vals)
        jh = J.value(polarize(GridFunction(grid, vals), H).values)
        excess = (jh - ju) / (1.0 + abs(ju))
        if excess > slack:
            bad += 1
        if excess > worst:
            worst, worst_H = excess, H
    return PolarizationReport(bad == 0, trials, bad, float(worst), slack, worst_H)


# ------------------------------------------------------------ a priori bound
class AprioriBoundViolation(SymEkelandError, AssertionError):
    """A sublevel function exceeded the a-priori gradient bound."""


@dataclass
class AprioriBound:
    bound: float
    C1: float
    C2: float
    embedding_constant: float
    measured: float

    @property
    def slack(self) -> float:
        return self.bound - self.measured


def _embedding_objective(grid: Grid, q: float, p: float):
    def f(v):
        xi = differences.gradients(grid, v)
        r = np.linalg.norm(xi, axis=2)
        m = grid.measures
        k = len(xi)
        A = np.sum(m * np.mean(r**p, axis=0))
        B = np.sum(m * np.abs(v) ** q)
        safe = np.where(r > 0, r, 1.0)
        w = np.where(r > 0, p * safe ** (p - 2), 0.0)
        dA = differences.gradient_adjoint(grid, xi * (w * m / k)[..., None])
        dB = m * q * np.abs(v) ** (q - 1) * np.sign(v)
        # minimise log|Du|_p - log|u|_q
        val = np.log(A) / p - np.log(B) / q
        grad = dA / (p * A) - dB / (q * B)
        return val, grad
    return f


def embedding_constant(grid: Grid, q: float, p: float, safety: float = 1.05) -> float:
    """Estimate ``sup ||u||_q / ||Du||_p`` on the grid.

    Starts from the lowest eigenvector of the discrete Dirichlet Laplacian
    and refines the ratio by quasi-Newton ascent; the result is scaled by
    ``safety``.
    """
    key = ("embedding", q, p, safety)
    if key in grid._cache:
        return grid._cache[key]
    L = None
    for combo in differences.stencils(grid):
        for D in combo:
            term = D.T @ D.multiply(grid.measures[:, None])
            L = term if L is None else L + term
    # a fixed ARPACK start vector keeps the estimate reproducible
    _, vec = eigsh(L.tocsc(), k=1, sigma=0, which="LM", v0=np.ones(grid.size))
    v0 = np.abs(vec[:, 0])
    res = optimize.minimize(_embedding_objective(grid, q, p), v0, jac=True, method="L-BFGS-B",
                            options={"maxiter": 500})
    v = res.x if res.fun < _embedding_objective(grid, q, p)(v0)[0] else v0
    u = GridFunction(grid, v)
    c = safety * lq_norm(u, q) / w1p_seminorm(u, p)
    grid._cache[key] = c
    return c


def apriori_gradient_bound(J: DiscreteFunctional, u: GridFunction, inf_estimate: float,
                           eps: float) -> AprioriBound:
    """Bound ``||Du||_p`` over the sublevel set ``{J <= inf_estimate + eps}``.

    From the lower growth bound and Hoelder,
    ``alpha B^p <= C1 + C2 B^g2`` with ``C1 = max(inf + eps, 0)`` and
    ``C2 = ||phi2||_{r2} C_emb^g2``, where ``C_emb`` bounds
    ``||u||_{g2 r2'} / ||Du||_p``.  The largest root is returned and
    checked against ``u``.
    """
    g = J.integrand.growth
    grid = J.grid
    ju = J.value(u.values)
    if ju > inf_estimate + eps + 1e-12 * (1 + abs(ju)):
        raise ValueError(f"u is outside the sublevel set: J(u)={ju} > {inf_estimate + eps}")
    C1 = max(inf_estimate + eps, 0.0)
    phi2_norm = lq_norm(weight_function(grid, g.phi2), g.r2)
    if g.gamma2 == 0:
        c_emb = 0.0
        C2 = phi2_norm * float(np.sum(grid.measures)) ** (1.0 / g.r2_conj)
        bound = ((C1 + C2) / g.alpha) ** (1.0 / g.p)
    else:
        c_emb = embedding_constant(grid, g.gamma2 * g.r2_conj, g.p)
        C2 = phi2_norm * c_emb**g.gamma2
        if C1 == 0:
            bound = (C2 / g.alpha) ** (1.0 / (g.p - g.gamma2))
        else:
            f = lambda B: g.alpha * B**g.p - C2 * B**g.gamma2 - C1
            hi = 1.0
            while f(hi) <= 0:
                hi *= 2.0
            bound = optimize.brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-14)
    measured = w1p_seminorm(u, g.p)
    if measured > bound * (1 + 1e-12):
        raise AprioriBoundViolation(
            f"||Du||_p = {measured:.6g} exceeds the a-priori bound {bound:.6g}")
    return AprioriBound(bound, C1, C2, c_emb, measured)
