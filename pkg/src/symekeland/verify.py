"""Invariant suites behind ``symekeland verify``.

Each suite returns a list of :class:`Check` results; a check's ``label``
names the property or conclusion it covers, so a failure report reads
e.g. ``FAIL property (3): (u*)^H = u*``.

Properties (1)-(5) refer to the abstract rearrangement framework:
(1) ``W^{1,1}`` embeds in ``L^{N/(N-1)}``, (2) polarization is continuous,
(3) ``(u*)^H = (u^H)* = u*`` and ``u^{HH} = u^H``, (4) iterated
polarizations converge to ``u*``, (5) polarization is non-expansive in
``L^{N/(N-1)}``.  Conclusions (a)-(d) are the four outputs of an Ekeland
certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DomainSpec, Grid, grid_compatible_halfspaces
from .rearrange import (
    GridFunction,
    PolarizationSchedule,
    defect_exponent,
    iterate_polarizations,
    lq_norm,
    polarize,
    symmetrize,
    w11_seminorm,
)


@dataclass
class Check:
    label: str
    name: str
    passed: bool
    cases: int
    failures: int = 0
    detail: str = ""

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.label}: {self.name} [{self.cases - self.failures}/{self.cases}]{extra}"


def default_axiom_grids() -> list[Grid]:
    return [Grid.cartesian(DomainSpec.ball(), 64),
            Grid.polar(DomainSpec.annulus(), 32, 64)]


def _random_field(grid: Grid, rng: np.random.Generator, k: int) -> np.ndarray:
    """Alternate continuous values with values drawn from a few levels, so
    ties are exercised as well."""
    if k % 2 == 0:
        return rng.uniform(0.0, 1.0, grid.size)
    return rng.integers(0, 5, grid.size).astype(float)


# ----------------------------------------------------------------- axioms
def axiom_suite(cases: int = 1000, rng_seed: int = 0, grids: list[Grid] | None = None,
                convergence_runs: int = 5, convergence_steps: int = 200) -> list[Check]:
    """Properties (1)-(5) on random nonnegative fields and random
    grid-compatible half-spaces; ``cases`` draws per grid."""
    grids = default_axiom_grids() if grids is None else grids
    rng = np.random.default_rng(rng_seed)
    counts = {k: 0 for k in ("idem", "fix", "comm", "contr", "cont")}
    total = 0
    worst_ratio = 0.0
    worst_contraction = -math.inf
    for grid in grids:
        pool = grid_compatible_halfspaces(grid)
        q = defect_exponent(grid)
        for k in range(cases):
            total += 1
            u = GridFunction(grid, _random_field(grid, rng, k))
            v = GridFunction(grid, _random_field(grid, rng, k + 1))
            H = pool[int(rng.integers(len(pool)))]
            uH = polarize(u, H)
            star = symmetrize(u)
            counts["idem"] += not polarize(uH, H).equals(uH)
            counts["fix"] += not polarize(star, H).equals(star)
            counts["comm"] += not symmetrize(uH).equals(star)
            excess = lq_norm(uH - polarize(v, H), q) - lq_norm(u - v, q)
            worst_contraction = max(worst_contraction, excess)
            counts["contr"] += excess > 1e-12
            sup = float(np.max(np.abs((uH - polarize(v, H)).values)))
            counts["cont"] += sup > float(np.max(np.abs((u - v).values)))
            worst_ratio = max(worst_ratio, lq_norm(u, q) / w11_seminorm(u))
    checks = [
        Check("property (1)", "||u||_V / ||u||_X bounded", math.isfinite(worst_ratio), total,
              0 if math.isfinite(worst_ratio) else total, f"worst ratio {worst_ratio:.4g}"),
        Check("property (2)", "sup|u^H - v^H| <= sup|u - v|", counts["cont"] == 0, total,
              counts["cont"]),
        Check("property (3)", "u^HH = u^H", counts["idem"] == 0, total, counts["idem"]),
        Check("property (3)", "(u*)^H = u*", counts["fix"] == 0, total, counts["fix"]),
        Check("property (3)", "(u^H)* = u*", counts["comm"] == 0, total, counts["comm"]),
    ]
    checks.append(convergence_check(grids[0], convergence_runs, convergence_steps, rng_seed))
    checks.append(Check("property (5)", "||u^H - v^H||_V <= ||u - v||_V + 1e-12",
                        counts["contr"] == 0, total, counts["contr"],
                        f"worst excess {worst_contraction:.3g}"))
    return checks


def convergence_check(grid: Grid, runs: int, steps: int, rng_seed: int = 0) -> Check:
    """Property (4): the defect is non-increasing along random schedules
    and strictly smaller at the end."""
    rng = np.random.default_rng(rng_seed + 1)
    bad, worst = 0, 0.0
    for r in range(runs):
        u = GridFunction(grid, rng.uniform(0.0, 1.0, grid.size))
        sched = PolarizationSchedule.random(grid, steps, rng_seed=rng_seed + 1000 + r)
        trace = np.array(iterate_polarizations(u, sched).trace)
        monotone = bool(np.all(np.diff(trace) <= 1e-12))
        ratio = trace[-1] / trace[0] if trace[0] > 0 else 0.0
        worst = max(worst, ratio)
        bad += not (monotone and ratio < 1.0)
    return Check("property (4)", "iterated polarizations decrease the defect", bad == 0, runs, bad,
                 f"worst final/initial {worst:.3g} after {steps} steps")


# ----------------------------------------------------------------- oracle
def oracle_suite(cases: int = 1000, rng_seed: int = 0, ekeland_runs: int = 100) -> list[Check]:
    """Main implementations against the brute-force oracles."""
    from . import ekeland
    from .oracle import LatticeSpec, oracle_ekeland, oracle_polarize, oracle_symmetrize

    rng = np.random.default_rng(rng_seed)
    g8 = Grid.cartesian(DomainSpec.ball(), 8)
    pool = grid_compatible_halfspaces(g8)
    bad = 0
    for k in range(cases):
        u = GridFunction(g8, _random_field(g8, rng, k))
        H = pool[int(rng.integers(len(pool)))]
        bad += not oracle_polarize(u, H).equals(polarize(u, H))
    checks = [Check("oracle_polarize equivalence", "8x8 disk, compatible half-spaces",
                    bad == 0, cases, bad)]

    grids = [Grid.cartesian(DomainSpec.ball(), 16), Grid.polar(DomainSpec.annulus(), 8, 16)]
    bad = 0
    for k in range(cases):
        g = grids[k % 2]
        u = GridFunction(g, _random_field(g, rng, k // 2))
        bad += not oracle_symmetrize(u).equals(symmetrize(u))
    checks.append(Check("oracle_symmetrize equivalence", "16x16 disk and 8x16 polar annulus",
                        bad == 0, cases, bad))

    g2 = Grid.cartesian(DomainSpec.ball(), 2)
    lattice = LatticeSpec(cell_count=g2.size, value_levels=5)
    states = lattice.enumerate()
    bad_c = bad_d = 0
    for k in range(ekeland_runs):
        f = lattice_energy(k)
        fs = np.array([f.value(s) for s in states])
        sigma = 0.2
        rho = (fs.max() - fs.min()) / sigma + 1.0
        u = GridFunction(g2, states[int(np.random.default_rng(k).integers(len(states)))])
        admissible = oracle_ekeland(f, u, rho, sigma, lattice)
        cert = ekeland.ekeland_select(f, u, ekeland.EkelandParams(rho, sigma), candidates=states)
        bad_c += not (cert.f_v <= f.value(u.values) + 1e-12)
        bad_d += tuple(float(a) for a in cert.v.values) not in admissible
    checks.append(Check("conclusion (c)", "J(v) <= J(u) on a 4-cell, 5-level lattice",
                        bad_c == 0, ekeland_runs, bad_c))
    checks.append(Check("conclusion (d)", "ekeland_select output in the exhaustive admissible set",
                        bad_d == 0, ekeland_runs, bad_d))
    return checks


@dataclass(frozen=True)
class LatticeEnergy:
    """Quadratic-plus-wiggle energy on a 4-cell grid."""

    grid: Grid
    Q: np.ndarray
    c: np.ndarray
    freq: float

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        d = x - self.c
        return float(d @ self.Q @ d + 0.3 * np.sin(3.0 * math.pi * self.freq * x.sum()))


def lattice_energy(seed: int) -> LatticeEnergy:
    g2 = Grid.cartesian(DomainSpec.ball(), 2)
    r = np.random.default_rng(seed)
    A = r.standard_normal((g2.size, g2.size))
    return LatticeEnergy(g2, A @ A.T + 0.5 * np.eye(g2.size), r.uniform(0.0, 1.0, g2.size),
                         float(r.uniform(0.5, 2.0)))


# --------------------------------------------------------------- pipeline
def trace_checks(trace, tag: str = "") -> list[Check]:
    """Conclusions (a)-(d) and the sequence-level assertions on a trace."""
    rows = trace.rows
    H = len(rows)
    pre = f"{tag}: " if tag else ""
    c_bad = sum(r.J_v > r.J_u for r in rows)
    b_bad = sum(r.dist_w11 > r.dist_bound + 1e-9 for r in rows)
    a_bad = sum(r.defect > trace.C_meas * math.sqrt(r.eps) * (1 + 1e-12) for r in rows)
    d_bad = sum("d" not in r.flags for r in rows)
    bounds = [e["apriori_bound"] for e in trace.metadata["per_h"]]
    g_bad = sum(r.grad_p_norm > b for r, b in zip(rows, bounds))
    return [
        Check("conclusion (a)", f"{pre}defect(v_h) <= C_meas sqrt(eps_h)", a_bad == 0, H, a_bad,
              f"C_meas {trace.C_meas:.4g}"),
        Check("conclusion (b)", f"{pre}||v_h - u_h|| <= sqrt(eps_h) + ||T u_h - u_h|| + 1e-9",
              b_bad == 0, H, b_bad),
        Check("conclusion (c)", f"{pre}J(v_h) <= J(u_h)", c_bad == 0, H, c_bad),
        Check("conclusion (d)", f"{pre}saturated descent, probe slope <= sigma", d_bad == 0, H, d_bad),
        Check("a-priori bound", f"{pre}||Dv_h||_p within the bound", g_bad == 0, H, g_bad),
    ]


def pipeline_suite(configs=("baseline_disk", "wiggle_disk")) -> list[Check]:
    """Run the bundled configs and check every certificate and the trace."""
    from .config import load_config
    from .ekeland import minimizing_sequence_pipeline

    checks = []
    for name in configs:
        cfg = load_config(name)
        J = cfg.validate()
        args = cfg.pipeline_args()
        trace = minimizing_sequence_pipeline(
            J, args["seq_len"], args["eps_schedule"], args["rng_seed"],
            probe_count=args["probe_count"], step_budget=args["step_budget"],
            polar_trials=args["polar_trials"])
        checks.extend(trace_checks(trace, name))
    return checks


SUITES = {"axioms": axiom_suite, "oracle": oracle_suite, "pipeline": pipeline_suite}
