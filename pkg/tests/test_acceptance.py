"""Acceptance criteria 1-7.

Each test records one ``PASS``/``FAIL`` line in ``RESULTS``; the
``pytest_terminal_summary`` hook in ``conftest.py`` prints them after the
run.  Running this file as a script executes every criterion and prints
the same lines.

Criteria 3 (exact W11 preservation) and 6 (vanishing defect) are known to
fail on this discretization; they are implemented as stated and left red.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import optimize

from symekeland import ekeland, rearrange, verify
from symekeland.config import load_config
from symekeland.functional import DiscreteFunctional, apriori_gradient_bound, make_integrand
from symekeland.geometry import DomainSpec, Grid, axis_aligned, grid_compatible_halfspaces
from symekeland.rearrange import (
    GridFunction,
    PolarizationSchedule,
    iterate_polarizations,
    polarize,
    w11_seminorm,
)

pytestmark = pytest.mark.slow

RESULTS: dict[int, str] = {}

# Criterion 2: frozen threshold (fraction of the initial defect after 500
# steps).  Calibrated once on pilot seeds 10000-10099, which are disjoint
# from the seeds 0-99 used below: the pilot's 95th percentile was 0.113
# (median 0.079, max 0.143), rounded up to 0.12.
CONVERGENCE_THRESHOLD = 0.12
CONVERGENCE_STEPS = 500
CONVERGENCE_RUNS = 100


def _record(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[k] = line
    print(line)


def _failed(checks) -> list[str]:
    return [str(c) for c in checks if not c.passed]


# ---------------------------------------------------------------------- 1
def test_criterion_1_axiom_suite():
    checks = verify.axiom_suite(cases=1000, rng_seed=0)
    for c in checks:
        print(c)
    relevant = [c for c in checks if c.label in ("property (3)", "property (5)")]
    bad = _failed(relevant)
    _record(1, not bad, f"{len(relevant)} property (3)/(5) checks x {relevant[0].cases} fields on the 64x64 "
            f"disk and the 32x64 polar annulus, failures: {bad or 'none'}")
    assert not bad


# ---------------------------------------------------------------------- 2
def test_criterion_2_convergence(disk64):
    ok_runs, non_monotone, ratios = 0, 0, []
    for seed in range(CONVERGENCE_RUNS):
        u = GridFunction(disk64, np.random.default_rng(seed).uniform(0.0, 1.0, disk64.size))
        sched = PolarizationSchedule.random(disk64, CONVERGENCE_STEPS, rng_seed=seed + 50_000)
        trace = np.array(iterate_polarizations(u, sched).trace)
        monotone = bool(np.all(np.diff(trace) <= 1e-12))
        ratio = trace[-1] / trace[0]
        ratios.append(ratio)
        non_monotone += not monotone
        ok_runs += monotone and ratio < CONVERGENCE_THRESHOLD
    ok = ok_runs >= math.ceil(0.95 * CONVERGENCE_RUNS)
    _record(2, ok, f"{ok_runs}/{CONVERGENCE_RUNS} runs monotone and below "
            f"{CONVERGENCE_THRESHOLD:g} x initial defect in {CONVERGENCE_STEPS} steps "
            f"(non-monotone {non_monotone}, median ratio {np.median(ratios):.3g}, "
            f"max {np.max(ratios):.3g})")
    assert ok


# ---------------------------------------------------------------------- 3
def test_criterion_3_equimeasurability_and_w11(disk64):
    rng = np.random.default_rng(3)
    pool = grid_compatible_halfspaces(disk64)
    x = disk64.centers
    r2 = (x**2).sum(axis=1)
    multiset_bad = axis_bad = other_bad = 0
    axis_worst = other_worst = 0.0
    cases = 0
    for k in range(200):
        if k % 2:
            vals = rng.uniform(0.0, 1.0, disk64.size)
        else:
            c = rng.uniform(-0.5, 0.5, 2)
            vals = np.exp(-8 * ((x - c) ** 2).sum(axis=1)) * (1 - r2)
        u = GridFunction(disk64, vals)
        H = pool[int(rng.integers(len(pool)))]
        uH = polarize(u, H)
        cases += 1
        multiset_bad += not np.array_equal(np.sort(uH.values), np.sort(u.values))
        before, after = w11_seminorm(u), w11_seminorm(uH)
        if axis_aligned(H):
            axis_worst = max(axis_worst, abs(after - before) / before)
            axis_bad += after != before
        else:
            rel = abs(after - before) / before
            other_worst = max(other_worst, rel)
            other_bad += rel > 10 * disk64.h
    ok = multiset_bad == 0 and axis_bad == 0 and other_bad == 0
    _record(3, ok, f"{cases} cases; multiset mismatches {multiset_bad}; axis-aligned W11 "
            f"not exact {axis_bad} (worst relative change {axis_worst:.3g}); other "
            f"half-spaces beyond 10h {other_bad} (worst {other_worst:.3g}, 10h = "
            f"{10 * disk64.h:.3g})")
    assert multiset_bad == 0, "polarization changed a value multiset"
    assert axis_bad == 0, "W11 seminorm not preserved exactly by axis-aligned polarization"
    assert other_bad == 0


# ---------------------------------------------------------------------- 4
def test_criterion_4_oracle_equivalence():
    checks = verify.oracle_suite(cases=1000, rng_seed=0, ekeland_runs=100)
    for c in checks:
        print(c)
    bad = _failed(checks)
    _record(4, not bad, "1000 polarize + 1000 symmetrize instances, 100 lattice Ekeland "
            f"runs; failures: {bad or 'none'}")
    assert not bad


# ---------------------------------------------------------------------- 5
def test_criterion_5_wiggle_pipeline():
    cfg = load_config("wiggle_disk")
    assert cfg.integrand["name"] == "wiggle" and cfg.grid["n"] == 64
    J = cfg.validate()
    args = cfg.pipeline_args()
    assert J.integrand.growth.p == 1.5
    assert args["eps_schedule"] == [4.0 ** -h for h in range(1, 7)]
    t0 = time.perf_counter()
    trace = ekeland.minimizing_sequence_pipeline(
        J, args["seq_len"], args["eps_schedule"], args["rng_seed"],
        probe_count=args["probe_count"], step_budget=args["step_budget"],
        polar_trials=args["polar_trials"])
    elapsed = time.perf_counter() - t0
    rows = trace.rows
    c_ok = all(r.J_v <= r.J_u for r in rows)
    per_h = trace.column("C_meas")
    tail = per_h[3:6]
    stability = float(tail.max() / tail.min()) if tail.min() > 0 else math.inf
    a_ok = stability <= 2.0 and all(
        r.defect <= trace.C_meas * math.sqrt(r.eps) * (1 + 1e-12) for r in rows)
    b_ok = all(r.dist_w11 <= r.dist_bound + 1e-9 for r in rows)
    bounds = [apriori_gradient_bound(J, c.v, trace.inf_estimate, r.eps).bound
              for c, r in zip(trace.certificates, rows)]
    grad = trace.column("grad_p_norm")
    g_ok = bool(np.all(np.isfinite(grad))) and all(g <= b for g, b in zip(grad, bounds))
    t_ok = elapsed <= 300.0
    ok = c_ok and a_ok and b_ok and g_ok and t_ok
    _record(5, ok, f"J(v)<=J(u) {c_ok}; C_meas {trace.C_meas:.4g}, per-h ratio over h=4..6 "
            f"{stability:.3f} (<= 2) {a_ok}; distance bound {b_ok}; sup ||Dv||_p "
            f"{grad.max():.4g} within a-priori bound {g_ok}; {elapsed:.0f} s (<= 300) {t_ok}")
    assert ok


# ---------------------------------------------------------------------- 6
def _cg_minimum(J: DiscreteFunctional) -> float:
    """Independent discrete minimum: plain nonlinear CG from a constant start."""
    res = optimize.minimize(lambda x: (J.value(x), J.gradient(x)), np.full(J.grid.size, 0.1),
                            jac=True, method="CG", options={"gtol": 1e-10, "maxiter": 100_000})
    return float(res.fun)


def test_criterion_6_convex_baseline():
    cfg = load_config("baseline_disk")
    assert cfg.integrand["name"] == "power"
    J = cfg.validate()
    args = cfg.pipeline_args()
    seq_len = 10
    trace = ekeland.minimizing_sequence_pipeline(
        J, seq_len, None, args["rng_seed"], probe_count=args["probe_count"],
        step_budget=args["step_budget"], polar_trials=args["polar_trials"])
    j_min = _cg_minimum(J)
    J_v = trace.column("J_v")
    defects = trace.column("defect")
    rel = abs(J_v[-1] - j_min) / abs(j_min)
    j_ok = rel <= 1e-6
    # defect(v_h) -> 0: the last term is at the resolution of the schedule
    # (sqrt(eps_10) ~ 1e-3) and the tail does not increase.
    target = math.sqrt(trace.rows[-1].eps)
    d_ok = defects[-1] <= target and bool(np.all(np.diff(defects[-4:]) <= 1e-12))
    ok = j_ok and d_ok
    _record(6, ok, f"J(v_10) {J_v[-1]:.12g} vs CG minimum {j_min:.12g}, relative "
            f"{rel:.3g} (<= 1e-6) {j_ok}; defect(v_h) {', '.join(f'{d:.3g}' for d in defects)}; "
            f"final defect <= sqrt(eps_10) = {target:.3g} {d_ok}")
    assert j_ok, "J(v_h) does not reach the discrete minimum"
    assert d_ok, "defect(v_h) does not vanish"


# ---------------------------------------------------------------------- 7
def _swapped_two_point(inside, own, mirror):
    return np.where(inside, np.minimum(own, mirror), np.maximum(own, mirror))


def _radius_only_schwarz(u: GridFunction) -> GridFunction:
    g = u.grid
    r2 = (g.lattice * g.lattice).sum(axis=1)
    order = np.lexsort((np.arange(g.size), r2))
    return u.with_values(rearrange._schwarz_assign(order, u.values))


def _no_sigma(f_w, f_v, dist, sigma):
    return f_w < f_v


def _small_pipeline_checks():
    g = Grid.cartesian(DomainSpec.ball(), 32)
    J = DiscreteFunctional(make_integrand("wiggle", g, lam=1.0), g)
    trace = ekeland.minimizing_sequence_pipeline(J, 3, None, 0, probe_count=64, step_budget=500)
    return verify.trace_checks(trace, "wiggle 32x32")


def test_criterion_7_mutations(monkeypatch):
    small = [Grid.cartesian(DomainSpec.ball(), 16), Grid.polar(DomainSpec.annulus(), 8, 16)]
    outcomes = {}

    with monkeypatch.context() as m:
        m.setattr(rearrange, "_two_point", _swapped_two_point)
        checks = verify.axiom_suite(cases=50, grids=small, convergence_runs=1,
                                    convergence_steps=20)
        outcomes["max/min swap -> property (3)"] = any(
            c.label == "property (3)" and not c.passed for c in checks)

    with monkeypatch.context() as m:
        m.setattr(rearrange, "schwarz_symmetrize", _radius_only_schwarz)
        checks = verify.oracle_suite(cases=100, ekeland_runs=1)
        outcomes["radius-only tie-break -> oracle_symmetrize equivalence"] = any(
            c.label == "oracle_symmetrize equivalence" and not c.passed for c in checks)

    # On a finite lattice the unpenalized search still stops at a point
    # that is admissible (it is a lattice minimizer), so the mutant is
    # caught on a continuous run: without the sigma-term the descent never
    # saturates, and (d) stays uncertified.
    with monkeypatch.context() as m:
        m.setattr(ekeland, "_improves", _no_sigma)
        checks = _small_pipeline_checks()
        outcomes["sigma dropped -> conclusion (d)"] = any(
            c.label == "conclusion (d)" and not c.passed for c in checks)

    # the unmutated suites are green, so the failures above come from the mutants
    clean = verify.oracle_suite(cases=100, ekeland_runs=20)
    clean += _small_pipeline_checks()
    clean += verify.axiom_suite(cases=50, grids=small, convergence_runs=1, convergence_steps=20)
    baseline_ok = all(c.passed for c in clean)
    ok = baseline_ok and all(outcomes.values())
    detail = "; ".join(f"{k}: {'detected' if v else 'MISSED'}" for k, v in outcomes.items())
    _record(7, ok, f"{detail}; unmutated suites green {baseline_ok}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
