"""Classic and symmetric Ekeland selection on a grid, and the driver that
turns a crude minimizing sequence into an almost-symmetric one.

Notation: ``J`` is a :class:`~symekeland.functional.DiscreteFunctional`,
distances are measured in the discrete ``W^{1,1}`` seminorm (a norm on
zero-extended grid functions), and a point ``w`` *improves* on ``v`` when

    J(w) < J(v) - sigma * ||w - v||_{W^{1,1}}.

A point that admits no improving ``w`` is an Ekeland point.  On a general
grid that condition is checked by descent saturation plus random probes;
on tiny lattices :func:`ekeland_select` can search a finite candidate set
exhaustively.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import BudgetExhausted, InfEstimateDrift, PolarAssumptionViolated
from .functional import (
    DiscreteFunctional,
    apriori_gradient_bound,
    check_polarization_monotone,
    random_bumps,
)
from .geometry import grid_compatible_halfspaces
from .rearrange import (
    DefectBelow,
    GridFunction,
    PolarizationSchedule,
    iterate_polarizations,
    linf_norm,
    polarize,
    symmetry_defect,
    w11_seminorm,
    w1p_seminorm,
)

log = logging.getLogger(__name__)

PROBE_COUNT = 256
STEP_BUDGET = 2000
_LBFGS_MEMORY = 8
_BACKTRACK = 40
Q_LADDER = (1.1, 1.25, 1.5)


# ------------------------------------------------------------------ params
@dataclass(frozen=True)
class EkelandParams:
    """Scales of one selection.

    ``rho`` bounds the distance travelled by the descent stage and
    ``sigma`` is the slope in the acceptance rule.  When ``inf_estimate``
    is given, the start point must satisfy
    ``J(u) - inf_estimate <= rho * sigma``.  ``defect_constant`` is the
    constant used by the defect flag ``a_ok`` (``defect(v) <= C rho``).
    """

    rho: float
    sigma: float
    eps: float | None = None
    probe_count: int = PROBE_COUNT
    step_budget: int = STEP_BUDGET
    inf_estimate: float | None = None
    defect_constant: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (self.rho > 0 and self.sigma > 0):
            raise ValueError("rho and sigma must be positive")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.probe_count < 0 or self.step_budget < 1:
            raise ValueError("probe_count must be >= 0 and step_budget >= 1")

    @classmethod
    def from_eps(cls, eps: float, **kw) -> "EkelandParams":
        """The coupled choice ``rho = sigma = sqrt(eps)``."""
        r = math.sqrt(eps)
        return cls(rho=r, sigma=r, eps=eps, **kw)

    def check_slack(self, f_u: float) -> None:
        if self.inf_estimate is None:
            return
        slack = f_u - self.inf_estimate
        if slack > self.rho * self.sigma * (1 + 1e-12) + 1e-15:
            raise ValueError(
                f"start point too far from the infimum: J(u) - inf = {slack:.6g} "
                f"> rho*sigma = {self.rho * self.sigma:.6g}")


@dataclass(frozen=True)
class EkelandCertificate:
    """Output point plus the evidence for the four conclusions.

    ``a_ok``/``b_ok`` are ``None`` where they do not apply: ``a_ok`` for
    the classic selection (no symmetry claim), ``b_ok`` when no infimum
    estimate was given (the distance bound needs ``J(u) - inf <= rho
    sigma``).  ``slope_probe`` is the largest
    ``(J(v) - J(w)) / ||w - v||`` seen over the final probe round; it is
    ``-inf`` if no probe was drawn.  ``d_probe_ok`` needs a saturated
    descent: a search stopped by ``step_budget`` certifies nothing about
    (d) and reports ``False``.
    """

    v: GridFunction
    f_v: float
    f_u: float
    defect_v: float
    dist_to_input: float
    slope_probe: float
    schedule_used: PolarizationSchedule | None
    a_ok: bool | None
    b_ok: bool | None
    c_ok: bool
    d_probe_ok: bool
    exhausted: bool = False
    steps: int = 0
    polarization_steps: int = 0
    T_u: GridFunction | None = None
    dist_T: float = 0.0
    C_meas: float = 0.0
    probes: np.ndarray | None = field(default=None, repr=False)
    exhaustive: bool = False

    @property
    def flags(self) -> dict:
        return {"a_ok": self.a_ok, "b_ok": self.b_ok, "c_ok": self.c_ok,
                "d_probe_ok": self.d_probe_ok}

    @property
    def all_ok(self) -> bool:
        return all(f is not False for f in self.flags.values())

    def flag_string(self) -> str:
        """``"abcd"`` with failed letters replaced by ``-`` and inapplicable by ``.``."""
        out = []
        for letter, f in zip("abcd", self.flags.values()):
            out.append("." if f is None else (letter if f else "-"))
        return "".join(out)


# ------------------------------------------------------------- acceptance
def _improves(f_w: float, f_v: float, dist: float, sigma: float) -> bool:
    """The acceptance rule of the descent: strict decrease by ``sigma * dist``."""
    return f_w < f_v - sigma * dist


def _slope(f_w: float, f_v: float, dist: float) -> float:
    if dist <= 0:
        return -math.inf
    return (f_v - f_w) / dist


def _w11(grid, a: np.ndarray) -> float:
    return w11_seminorm(GridFunction(grid, a))


# ------------------------------------------------------------------ probes
def _probe_points(v: np.ndarray, grad: np.ndarray, grid, rng: np.random.Generator,
                  count: int) -> np.ndarray:
    """``count`` perturbations of ``v`` at log-uniform scales.

    A third are smooth bumps of random sign, a third are cell-wise noise
    and the rest follow the negative gradient with a noisy tilt.
    """
    scale = 1.0 + float(np.max(np.abs(v))) if v.size else 1.0
    out = np.empty((count, v.size))
    gnorm = float(np.max(np.abs(grad))) or 1.0
    for k in range(count):
        t = scale * 10.0 ** rng.uniform(-6, -1)
        kind = k % 3
        if kind == 0:
            phi = random_bumps(grid, rng, count=1) * rng.choice((-1.0, 1.0))
        elif kind == 1:
            phi = rng.standard_normal(v.size)
        else:
            phi = -grad / gnorm + 0.1 * rng.standard_normal(v.size)
        m = float(np.max(np.abs(phi))) or 1.0
        out[k] = v + t * phi / m
    return out


# ---------------------------------------------------------------- descent
def _lbfgs_direction(g: np.ndarray, mem: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in reversed(mem):
        a = float(s @ q) / float(y @ s)
        alphas.append(a)
        q -= a * y
    if mem:
        s, y = mem[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), a in zip(mem, reversed(alphas)):
        b = float(y @ q) / float(y @ s)
        q += (a - b) * s
    return -q


@dataclass
class _DescentState:
    v: np.ndarray
    f: float
    steps: int = 0
    repolarized: int = 0
    exhausted: bool = False
    slope: float = -math.inf
    probes: np.ndarray | None = None


def _descend(J: DiscreteFunctional, v0: np.ndarray, params: EkelandParams,
             rng: np.random.Generator, after_accept=None) -> _DescentState:
    """Accept improving points until neither a quasi-Newton line search
    nor ``probe_count`` random probes produce one."""
    grid = J.grid
    st = _DescentState(np.array(v0, dtype=float), J.value(v0))
    sigma = params.sigma
    mem: list[tuple[np.ndarray, np.ndarray]] = []
    g = J.gradient(st.v)
    while True:
        if st.steps >= params.step_budget:
            st.exhausted = True
            break
        w = None
        d = _lbfgs_direction(g, mem)
        if float(d @ g) >= 0:
            mem.clear()
            d = -g
        step = 1.0 if mem else 1.0 / max(float(np.max(np.abs(g))), 1e-300)
        for _ in range(_BACKTRACK):
            cand = st.v + step * d
            f_c = J.value(cand)
            if _improves(f_c, st.f, _w11(grid, cand - st.v), sigma):
                w, f_w = cand, f_c
                break
            step *= 0.5
        if w is None:
            # line search saturated: fall back to random probes
            pts = _probe_points(st.v, g, grid, rng, params.probe_count)
            worst = -math.inf
            for cand in pts:
                f_c = J.value(cand)
                dist = _w11(grid, cand - st.v)
                worst = max(worst, _slope(f_c, st.f, dist))
                if _improves(f_c, st.f, dist, sigma):
                    w, f_w = cand, f_c
                    break
            if w is None:
                st.slope, st.probes = worst, pts
                break
            mem.clear()
        if after_accept is not None:
            w, f_w, moved = after_accept(w, f_w)
            if moved:
                st.repolarized += 1
                mem.clear()
        g_new = J.gradient(w)
        s, y = w - st.v, g_new - g
        if float(s @ y) > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            mem.append((s, y))
            del mem[:-_LBFGS_MEMORY]
        st.v, st.f, g = w, f_w, g_new
        st.steps += 1
    return st


def _lattice_select(J, u: np.ndarray, candidates: np.ndarray, params: EkelandParams):
    """Greedy exhaustive selection over a finite candidate set: move to the
    lowest-energy improving candidate until none is left."""
    grid = J.grid
    f_all = np.array([J.value(c) for c in candidates])
    v, f_v = np.array(u, dtype=float), J.value(u)
    steps = 0
    while True:
        dist = np.array([_w11(grid, c - v) for c in candidates])
        ok = np.array([_improves(fw, f_v, d, params.sigma) for fw, d in zip(f_all, dist)])
        if not ok.any():
            slopes = [_slope(fw, f_v, d) for fw, d in zip(f_all, dist)]
            return v, f_v, steps, float(max(slopes, default=-math.inf))
        k = int(np.flatnonzero(ok)[np.argmin(f_all[ok])])
        v, f_v = candidates[k].copy(), float(f_all[k])
        steps += 1
        if steps > params.step_budget:
            raise BudgetExhausted("lattice search exceeded the step budget")


def ekeland_select(J: DiscreteFunctional, u: GridFunction, params: EkelandParams, *,
                   candidates: np.ndarray | None = None,
                   raise_on_budget: bool = False) -> EkelandCertificate:
    """Classic Ekeland selection started at ``u``.

    With ``candidates`` (an array of shape ``(M, cells)``) the search is
    exhaustive over that finite set and conclusion (d) is certified against
    every candidate.  Otherwise descent plus random probing is used.
    Termination by ``step_budget`` sets ``exhausted``; with
    ``raise_on_budget`` it raises :class:`BudgetExhausted` instead.
    """
    grid = u.grid
    f_u = J.value(u.values)
    params.check_slack(f_u)
    probes = None
    exhaustive = candidates is not None
    if exhaustive:
        cands = np.atleast_2d(np.asarray(candidates, dtype=float))
        v, f_v, steps, slope = _lattice_select(J, u.values, cands, params)
        exhausted = False
    else:
        st = _descend(J, u.values, params, np.random.default_rng(params.rng_seed))
        v, f_v, steps, slope, exhausted, probes = st.v, st.f, st.steps, st.slope, st.exhausted, st.probes
    if exhausted and raise_on_budget:
        raise BudgetExhausted(f"no Ekeland point within {params.step_budget} steps")
    vf = GridFunction(grid, v)
    dist = _w11(grid, v - u.values)
    return EkelandCertificate(
        v=vf, f_v=f_v, f_u=f_u, defect_v=symmetry_defect(vf), dist_to_input=dist,
        slope_probe=slope, schedule_used=None, a_ok=None,
        b_ok=dist <= params.rho + 1e-9 if params.inf_estimate is not None else None,
        c_ok=f_v <= f_u + 1e-12,
        d_probe_ok=not exhausted and slope <= params.sigma * (1 + 1e-6),
        exhausted=exhausted, steps=steps, probes=probes, exhaustive=exhaustive)


# -------------------------------------------------------------- symmetric
def polarization_tolerance(J: DiscreteFunctional, f: float) -> float:
    """Discretization slack allowed when a polarization raises ``J``."""
    return 10.0 * J.grid.spacing * (1.0 + abs(f))


def symmetric_ekeland_select(J: DiscreteFunctional, u: GridFunction, params: EkelandParams, *,
                             raise_on_budget: bool = False) -> EkelandCertificate:
    """Ekeland selection that also brings ``u`` close to its rearrangement.

    Stage 1 polarizes ``u`` by grid-compatible half-spaces (a seeded random
    permutation of the pool, cycled) until the symmetry defect drops below
    ``rho / 2``.  A step that would raise ``J`` is skipped; one that
    raises it by more than :func:`polarization_tolerance` aborts with
    :class:`PolarAssumptionViolated`.  The stage also ends, flagged as
    exhausted, once a full cycle of the pool changes nothing.

    Stage 2 runs the descent of :func:`ekeland_select` from the result
    ``T u``; after every accepted step one freshly drawn polarization is
    tried and kept if it is itself an improving step.
    """
    grid = u.grid
    if not u.is_nonnegative():
        raise ValueError("symmetric selection needs a nonnegative start point")
    f_u = J.value(u.values)
    params.check_slack(f_u)
    rng = np.random.default_rng(params.rng_seed)
    pool = grid_compatible_halfspaces(grid)
    order = rng.permutation(len(pool))
    schedule = PolarizationSchedule(tuple(pool[i] for i in order), DefectBelow(params.rho / 2),
                                    params.rng_seed)

    energy = {"f": f_u}

    def guard(v, w, H):
        f_w = J.value(w.values)
        excess = f_w - energy["f"]
        tol = polarization_tolerance(J, energy["f"])
        if excess > tol:
            raise PolarAssumptionViolated(
                f"polarization by {H} raised J by {excess:.3g} (> {tol:.3g})")
        if excess > 0:
            return False
        energy["f"] = f_w
        return True

    run = iterate_polarizations(u, schedule, accept=guard, stall_limit=len(pool))
    T_u, stage1_exhausted, n_pol = run.u, run.exhausted, len(run.applied)
    f_T = J.value(T_u.values)
    dist_T = _w11(grid, T_u.values - u.values)

    def repolarize(w, f_w):
        H = pool[int(rng.integers(len(pool)))]
        cand = polarize(GridFunction(grid, w), H).values
        f_c = J.value(cand)
        if _improves(f_c, f_w, _w11(grid, cand - w), params.sigma):
            return cand, f_c, True
        return w, f_w, False

    st = _descend(J, T_u.values, params, rng, after_accept=repolarize)
    if st.exhausted and raise_on_budget:
        raise BudgetExhausted(f"no Ekeland point within {params.step_budget} steps")
    vf = GridFunction(grid, st.v)
    defect = symmetry_defect(vf)
    dist = _w11(grid, st.v - u.values)
    return EkelandCertificate(
        v=vf, f_v=st.f, f_u=f_u, defect_v=defect, dist_to_input=dist,
        slope_probe=st.slope, schedule_used=schedule,
        a_ok=defect <= params.defect_constant * params.rho,
        b_ok=dist <= params.rho + dist_T + 1e-9 if params.inf_estimate is not None else None,
        c_ok=st.f <= f_u + 1e-12,
        d_probe_ok=not st.exhausted and st.slope <= params.sigma * (1 + 1e-6),
        exhausted=st.exhausted or stage1_exhausted, steps=st.steps,
        polarization_steps=n_pol + st.repolarized, T_u=T_u, dist_T=dist_T,
        C_meas=defect / params.rho, probes=st.probes)


# ------------------------------------------------------- truncation / VI
def truncate(u: GridFunction, k: float) -> GridFunction:
    """Pointwise clamp to ``[-k, k]``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return u.with_values(np.clip(u.values, -k, k))


@dataclass
class VIReport:
    passed: bool
    count: int
    pass_rate: float
    worst_margin: float
    margins: np.ndarray = field(repr=False)


def _stencil_closure(grid, mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for axis in range(grid.dimension):
        for step in (1, -1):
            nb, _ = grid.neighbors(axis, step)
            ok = nb >= 0
            out[ok] |= mask[nb[ok]]
    return out


def variational_inequality_check(J: DiscreteFunctional, v: GridFunction, eps: float,
                                 test_set: Sequence, localized: bool = False) -> VIReport:
    """Check ``J(v) <= J(w) + sqrt(eps) ||Dw - Dv||_1`` for each test point.

    With ``localized`` the entries of ``test_set`` are perturbations ``phi``
    and ``w = v + phi``; both energies are then summed over the cells whose
    discrete gradient sees ``phi`` (the support of ``phi`` together with its
    stencil neighbours).  ``margins`` holds ``J(w) + slack - J(v)``.
    """
    if len(test_set) == 0:
        raise ValueError("test_set must be nonempty")
    grid = v.grid
    root = math.sqrt(eps)
    margins = []
    dens_v = J.density(v.values)
    for item in test_set:
        a = item.values if isinstance(item, GridFunction) else np.asarray(item, dtype=float)
        if localized:
            w = v.values + a
            cells = _stencil_closure(grid, a != 0)
        else:
            w = a
            cells = slice(None)
        slack = root * _w11(grid, w - v.values)
        margins.append(float(np.sum(J.density(w)[cells]) + slack - np.sum(dens_v[cells])))
    margins = np.array(margins)
    tol = 1e-12 * (1.0 + abs(float(np.sum(dens_v))))
    ok = margins >= -tol
    return VIReport(bool(ok.all()), len(margins), float(ok.mean()), float(margins.min()), margins)


def truncation_profile(J: DiscreteFunctional, v: GridFunction, eps: float,
                       levels: Sequence[float]) -> list[dict]:
    """Variational-inequality margin and level-set measure at each
    truncation level ``k`` (``w = truncate(v, k)``)."""
    out = []
    for k in levels:
        w = truncate(v, k)
        rep = variational_inequality_check(J, v, eps, [w])
        mass = float(np.sum(v.grid.measures[np.abs(v.values) > k]))
        out.append({"k": float(k), "margin": rep.worst_margin, "level_measure": mass})
    return out


# --------------------------------------------------------------- pipeline
CSV_COLUMNS = ("h", "eps", "J_u", "J_v", "defect", "grad_p_norm", "linf_norm", "w1q_norm",
               "dist_w11", "dist_bound", "C_meas", "flags")


@dataclass
class TraceRow:
    h: int
    eps: float
    J_u: float
    J_v: float
    defect: float
    grad_p_norm: float
    linf_norm: float
    w1q_norm: float
    dist_w11: float
    dist_bound: float
    C_meas: float
    flags: str


@dataclass
class ExperimentTrace:
    rows: list[TraceRow]
    metadata: dict
    C_meas: float
    inf_estimate: float
    certificates: list[EkelandCertificate] = field(default_factory=list, repr=False)
    crude: list[GridFunction] = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def default_eps_schedule(seq_len: int, base: float = 4.0) -> list[float]:
    return [base ** -(h + 1) for h in range(seq_len)]


def _start_bump(grid, rng: np.random.Generator, amplitude: float = 1.0) -> np.ndarray:
    """An off-centre nonnegative bump vanishing on the boundary."""
    R = grid.domain.outer_radius
    x = grid.centers
    c = np.zeros(grid.dimension)
    c[0] = 0.35 * R
    c[1:] = rng.uniform(-0.2, 0.2, grid.dimension - 1) * R
    r = np.linalg.norm(x, axis=1) / R
    return amplitude * np.exp(-np.sum((x - c) ** 2, axis=1) / (0.18 * R * R)) * np.clip(1 - r**2, 0, None)


class _Running:
    """Running minimum (and minimizer) of every energy evaluation."""

    def __init__(self, J: DiscreteFunctional, value: float, x: np.ndarray | None = None):
        self.J, self.value, self.x = J, value, x

    def offer(self, x: np.ndarray, f: float) -> None:
        if f < self.value:
            self.value, self.x = f, np.array(x, dtype=float)


def estimate_infimum(J: DiscreteFunctional, starts: Sequence[np.ndarray], *,
                     tol: float = 1e-13, maxiter: int = 20000) -> tuple[float, np.ndarray]:
    """Long nonnegative quasi-Newton descent from each start; the best end
    point and its energy."""
    best, best_x = math.inf, None
    bounds = [(0.0, None)] * J.grid.size
    for x0 in starts:
        res = optimize.minimize(lambda x: (J.value(x), J.gradient(x)), x0, jac=True,
                                method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": maxiter, "ftol": tol, "gtol": 1e-12,
                                         "maxcor": 20, "maxfun": 4 * maxiter})
        f = J.value(res.x)
        if f < best:
            best, best_x = f, res.x
    return best, best_x


def _bisect_segment(J: DiscreteFunctional, a: np.ndarray, b: np.ndarray, target: float,
                    iters: int = 60) -> np.ndarray:
    """A point of the segment ``[a, b]`` with energy ``<= target`` next to a
    crossing; requires ``J(b) <= target``."""
    lo, hi = 0.0, 1.0  # J(a + lo (b - a)) > target >= J(a + hi (b - a))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if J.value(a + mid * (b - a)) <= target:
            hi = mid
        else:
            lo = mid
    return a + hi * (b - a)


def crude_point(J: DiscreteFunctional, start: np.ndarray, anchor: np.ndarray,
                target: float) -> np.ndarray:
    """The point of the segment from ``start`` to ``anchor`` where ``J``
    first drops to ``target`` (``start`` itself if it is already there)."""
    if J.value(start) <= target:
        return np.array(start, dtype=float)
    if J.value(anchor) > target:
        raise ValueError("anchor lies above the target level")
    return _bisect_segment(J, np.asarray(start, dtype=float), np.asarray(anchor, dtype=float),
                           target)


def minimizing_sequence_pipeline(J: DiscreteFunctional, seq_len: int,
                                 eps_schedule: Sequence[float] | None = None,
                                 rng_seed: int = 0, *, probe_count: int = PROBE_COUNT,
                                 step_budget: int = STEP_BUDGET,
                                 q_ladder: Sequence[float] = Q_LADDER,
                                 polar_trials: int = 20) -> ExperimentTrace:
    """Build a crude minimizing sequence and upgrade every term.

    The infimum is estimated by long descents from a zero, a symmetric and
    an off-centre start; the estimate is afterwards lowered to the running
    minimum of every energy computed.  ``u_h`` is the point of the segment
    from an off-centre bump to the best known point where ``J`` reaches
    ``inf + eps_h / 2``, so each term uses exactly half of its tolerance.
    Each ``u_h`` is then passed to :func:`symmetric_ekeland_select` with
    ``rho = sigma = sqrt(eps_h)``.  If an Ekeland point beats the estimate
    by more than ``eps_h`` the whole sequence is rebuilt once around the
    new best point; a second drift raises :class:`InfEstimateDrift`.
    """
    eps_schedule = list(default_eps_schedule(seq_len) if eps_schedule is None else eps_schedule)
    if len(eps_schedule) != seq_len or seq_len < 1:
        raise ValueError("eps_schedule must have seq_len entries")
    if any(e <= 0 for e in eps_schedule) or any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps_schedule must be positive and strictly decreasing")
    grid = J.grid
    rep = check_polarization_monotone(J, trials=polar_trials, rng_seed=rng_seed)
    if not rep.passed:
        raise PolarAssumptionViolated(
            f"integrand {J.integrand.name!r} fails the polarization check "
            f"(worst relative excess {rep.worst_excess:.3g} > {rep.tolerance:.3g})")
    rng = np.random.default_rng(rng_seed)
    start = _start_bump(grid, rng)
    r = np.linalg.norm(grid.centers, axis=1) / grid.domain.outer_radius
    sym = np.clip(1 - r**2, 0, None)
    inf_estimate, best = estimate_infimum(J, [np.zeros(grid.size), sym, start])
    # the crude start has the height of the best point found
    start = start * max(float(np.max(best)), 1e-3)
    running = _Running(J, inf_estimate, best)

    for attempt in range(2):
        try:
            return _run_sequence(J, eps_schedule, rng_seed, start, running, probe_count,
                                 step_budget, q_ladder, rep)
        except InfEstimateDrift as exc:
            if attempt:
                raise
            log.warning("restarting: %s", exc)
    raise AssertionError("unreachable")


def _run_sequence(J, eps_schedule, rng_seed, start, running, probe_count, step_budget,
                  q_ladder, polar_report) -> ExperimentTrace:
    grid = J.grid
    p = J.integrand.growth.p
    inf0, anchor = running.value, running.x
    rows, certs, crude, extra = [], [], [], []
    for h, eps in enumerate(eps_schedule, start=1):
        x = crude_point(J, start, anchor, inf0 + eps / 2)
        f_u = J.value(x)
        u = GridFunction(grid, x)
        params = EkelandParams.from_eps(eps, probe_count=probe_count, step_budget=step_budget,
                                        inf_estimate=inf0, rng_seed=rng_seed + h)
        cert = symmetric_ekeland_select(J, u, params)
        running.offer(cert.v.values, cert.f_v)
        if running.value < inf0 - eps:
            raise InfEstimateDrift(
                f"inf estimate lowered by {inf0 - running.value:.3g} > eps_{h} = {eps:.3g}")
        v = cert.v
        bound = apriori_gradient_bound(J, v, inf0, eps)
        qs = {f"{q:g}p": w1p_seminorm(v, q * p) for q in q_ladder}
        root = math.sqrt(eps)
        rows.append(TraceRow(
            h=h, eps=float(eps), J_u=f_u, J_v=cert.f_v, defect=cert.defect_v,
            grad_p_norm=w1p_seminorm(v, p), linf_norm=linf_norm(v),
            w1q_norm=qs[f"{1.25:g}p"] if 1.25 in q_ladder else next(iter(qs.values())),
            dist_w11=cert.dist_to_input, dist_bound=root + cert.dist_T,
            C_meas=cert.defect_v / root, flags=cert.flag_string()))
        extra.append({"h": h, "w1q": qs, "apriori_bound": bound.bound,
                      "stage1_distance": cert.dist_T, "steps": cert.steps,
                      "polarizations": cert.polarization_steps, "exhausted": cert.exhausted,
                      "slope_probe": cert.slope_probe})
        certs.append(cert)
        crude.append(u)

    C_meas = max(r.C_meas for r in rows)
    for r in rows:
        if r.J_v > r.J_u:
            raise AssertionError(f"J(v_{r.h}) > J(u_{r.h})")
        if r.defect > C_meas * math.sqrt(r.eps) * (1 + 1e-12):
            raise AssertionError(f"defect(v_{r.h}) exceeds C_meas sqrt(eps_{r.h})")
    last = certs[-1]
    levels = np.quantile(np.abs(last.v.values), [0.5, 0.75, 0.9, 0.99, 1.0])
    metadata = {
        "grid": grid.describe(),
        "integrand": {"name": J.integrand.name, "params": J.integrand.params,
                      "growth": asdict(J.integrand.growth)},
        "seeds": {"rng_seed": rng_seed},
        "tolerances": {"c": 1e-12, "d_relative": 1e-6, "b_absolute": 1e-9,
                       "polarization": 10.0 * grid.spacing},
        "probe_count": probe_count, "step_budget": step_budget,
        "eps_schedule": [float(e) for e in eps_schedule],
        "inf_estimate": inf0, "running_minimum": running.value,
        "C_meas": C_meas, "q_ladder": list(q_ladder), "per_h": extra,
        "polarization_check": {"passed": polar_report.passed,
                               "worst_excess": polar_report.worst_excess},
        "truncation": truncation_profile(J, last.v, eps_schedule[-1], levels),
    }
    return ExperimentTrace(rows, metadata, C_meas, inf0, certs, crude)
