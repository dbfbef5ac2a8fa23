from __future__ import annotations

import dataclasses
import math
import re

import numpy as np
import pytest

from symekeland.errors import GrowthParamError, NonFinite
from symekeland.functional import (
    XI_CLAMP,
    AprioriBoundViolation,
    DiscreteFunctional,
    GrowthParams,
    Integrand,
    apriori_gradient_bound,
    builtin_integrands,
    check_growth,
    check_polarization_monotone,
    evaluate,
    find_midpoint_violation,
    integrand_names,
    integrand_summary,
    make_integrand,
    register_integrand,
    wiggle_profile,
)
from symekeland.geometry import DomainSpec, Grid
from symekeland.oracle import _difference_operators
from symekeland.rearrange import GridFunction


def _plain_growth(**kw):
    base = dict(alpha=1.0, beta=1.0, p=1.5)
    base.update(kw)
    return GrowthParams(**base)


# ----------------------------------------------------------------- growth
def test_growth_derived_quantities():
    g = _plain_growth()
    assert g.p_star == pytest.approx(6.0)
    assert g.r1_conj == pytest.approx(2.0)
    assert g.r2_conj == pytest.approx(1.5)
    assert g.regime == "Linf"  # r0 = 2 > N/p = 4/3
    assert _plain_growth(r0=1.2).regime == "W1q"


@pytest.mark.parametrize("kw, fragment", [
    (dict(alpha=0.0), "α > 0"),
    (dict(p=2.0), "1 < p < N"),
    (dict(p=1.0), "1 < p < N"),
    (dict(r0=4 / 3), "r₀ ≠ N/p"),
    (dict(r2=2.0), "r₂ > N"),
    (dict(gamma2=1.5, phi2=1.0), "γ₂ < min{p"),
    (dict(gamma1=4.0), "γ₁ < p*"),
    (dict(phi0=-1.0), "phi0 ≥ 0"),
])
def test_growth_rejections(kw, fragment):
    with pytest.raises(GrowthParamError, match=re.escape(fragment)):
        _plain_growth(**kw)


def test_check_growth_power_equality_case(disk16):
    j = make_integrand("power", disk16, p=1.5)
    rep = check_growth(j, disk16, samples=2000)
    assert rep.passed
    assert rep.worst_margin == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.1])
def test_check_growth_wiggle(disk16, lam):
    j = make_integrand("wiggle", disk16, p=1.5, lam=lam)
    assert j.growth.alpha == 1.0 and j.growth.beta == 1.5
    if lam:
        assert j.growth.gamma2 == 1.0 < j.growth.p
    assert check_growth(j, disk16, samples=5000).passed


def test_check_growth_reports_violation(disk16):
    g = _plain_growth(gamma2=1.0, phi2=1.0)
    bad = Integrand("bad", lambda x, s, xi: np.linalg.norm(xi, axis=-1) ** 1.5 - 2 * np.abs(s), g)
    rep = check_growth(bad, disk16, samples=500)
    assert not rep.passed
    assert rep.worst_bound == "lower"
    x, s, xi = rep.worst_triple
    assert s != 0
    assert bad(np.array(x), s, np.array(xi))[0] < g.lower(np.array([s]), np.array([np.linalg.norm(xi)]))[0]


def test_check_growth_needs_samples(disk16):
    with pytest.raises(ValueError):
        check_growth(make_integrand("power", disk16), disk16, samples=0)


# -------------------------------------------------------------- builtins
def test_builtins(disk16):
    js = builtin_integrands(disk16, p=1.5, lam=0.1)
    names = [j.name for j in js]
    assert {"power", "wiggle"} <= set(names)
    for j in js:
        assert j.radial_flag
        assert check_growth(j, disk16, samples=2000).passed
    assert integrand_summary("power")


def test_wiggle_nonconvexity_witness(disk16):
    j = make_integrand("wiggle", disk16, p=1.5)
    a, b = j.nonconvexity_witness
    f = lambda t: wiggle_profile(t, 1.5)
    assert f((a + b) / 2) > (f(a) + f(b)) / 2
    assert make_integrand("power", disk16).nonconvexity_witness is None
    assert find_midpoint_violation(lambda t: t**1.5) is None


def test_user_registered_integrand(disk16):
    @register_integrand("test-quadratic")
    def quad(grid, p=1.5, lam=0.0):
        """Test hook."""
        return Integrand("test-quadratic",
                         lambda x, s, xi: np.sum(xi**2, axis=-1) ** (p / 2),
                         GrowthParams(1.0, 1.0, p), radial_flag=True)

    assert "test-quadratic" in integrand_names()
    j = make_integrand("test-quadratic", disk16)
    J = DiscreteFunctional(j, disk16)
    u = GridFunction(disk16, np.random.default_rng(0).uniform(0, 1, disk16.size))
    assert evaluate(J, u) == pytest.approx(evaluate(DiscreteFunctional(make_integrand("power", disk16), disk16), u))
    with pytest.raises(KeyError):
        make_integrand("missing", disk16)


def test_radial_flag_rotation_spot_check(disk16, rng):
    j = make_integrand("wiggle", disk16, lam=0.3)
    x = disk16.centers[:50]
    s = rng.uniform(-1, 1, 50)
    xi = rng.normal(size=(50, 2))
    for a in rng.uniform(0, 2 * math.pi, 10):
        R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        np.testing.assert_allclose(j.eval(x, s, xi @ R.T), j.eval(x, s, xi), rtol=1e-12, atol=1e-12)


# -------------------------------------------------------------- evaluate
def test_functional_invariants(disk16):
    j = make_integrand("power", disk16)
    with pytest.raises(ValueError):
        DiscreteFunctional(j, disk16, p_space=2.0)
    with pytest.raises(ValueError):
        DiscreteFunctional(j, Grid.cartesian(DomainSpec.ball(dimension=3), 6))


def test_evaluate_zero_and_homogeneity(disk16, rng):
    J = DiscreteFunctional(make_integrand("power", disk16, p=1.5), disk16)
    assert evaluate(J, GridFunction.zeros(disk16)) == 0.0
    u = GridFunction(disk16, rng.uniform(0, 1, disk16.size))
    for lam in (0.5, 2.0, 7.0):
        assert evaluate(J, lam * u) == pytest.approx(lam**1.5 * evaluate(J, u), rel=1e-12)


def _generic_integrand():
    def ev(x, s, xi):
        return (1 + x[:, 0] ** 2) * np.abs(xi[:, 0] + 0.5 * xi[:, 1]) ** 1.5 \
            + np.abs(xi[:, 1]) ** 1.5 + np.sin(s) * x[:, 1]
    return Integrand("generic", ev, _plain_growth(beta=10.0, gamma1=1.0, phi1=1.0))


@pytest.mark.parametrize("grid", [Grid.cartesian(DomainSpec.ball(), 8),
                                  Grid.cartesian(DomainSpec.ball(), 12)])
def test_evaluate_matches_straight_loop(grid, rng):
    j = _generic_integrand()
    J = DiscreteFunctional(j, grid)
    vals = rng.normal(size=grid.size)
    mats = _difference_operators(grid)
    N = grid.dimension
    grads = [[M @ vals for M in mats[c * N:(c + 1) * N]] for c in range(2**N)]
    total = 0.0
    for i in range(grid.size):
        acc = 0.0
        for c in range(2**N):
            xi = np.array([[grads[c][k][i] for k in range(N)]])
            acc += float(j.eval(grid.centers[i:i + 1], np.array([vals[i]]), xi)[0])
        total += grid.measures[i] * acc / 2**N
    assert evaluate(J, GridFunction(grid, vals)) == pytest.approx(total, rel=1e-12)


def test_evaluate_additive(disk16, rng):
    J = DiscreteFunctional(make_integrand("wiggle", disk16, lam=0.5), disk16)
    u = GridFunction(disk16, rng.uniform(0, 1, disk16.size))
    mask = rng.uniform(size=disk16.size) < 0.4
    parts = evaluate(J, u, mask) + evaluate(J, u, ~mask)
    assert parts == pytest.approx(evaluate(J, u), rel=1e-13, abs=1e-15)


def test_evaluate_rotation_invariant_on_polar_grid(rng):
    g = Grid.polar(DomainSpec.annulus(), 8, 16)
    J = DiscreteFunctional(make_integrand("wiggle", g, lam=0.5), g)
    vals = rng.uniform(0, 1, g.size).reshape(8, 16)
    base = J.value(vals.ravel())
    for k in range(1, 16):
        assert J.value(np.roll(vals, k, axis=1).ravel()) == pytest.approx(base, rel=1e-12)


def test_evaluate_nonfinite(disk8):
    nan_j = Integrand("nan", lambda x, s, xi: np.where(s > 0.5, np.nan, 0.0), _plain_growth())
    J = DiscreteFunctional(nan_j, disk8)
    with pytest.raises(NonFinite):
        evaluate(J, GridFunction(disk8, np.ones(disk8.size)))


def test_gradient_matches_finite_differences(disk8, rng):
    for name in ("power", "wiggle"):
        J = DiscreteFunctional(make_integrand(name, disk8, lam=0.7), disk8)
        x = rng.uniform(0.1, 1, disk8.size)
        g = J.gradient(x)
        for i in rng.choice(disk8.size, 8, replace=False):
            e = np.zeros(disk8.size)
            e[i] = 1e-6
            fd = (J.value(x + e) - J.value(x - e)) / 2e-6
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_generic_gradient_uses_central_differences(disk8, rng):
    J = DiscreteFunctional(_generic_integrand(), disk8)
    x = rng.uniform(0.1, 1, disk8.size)
    g = J.gradient(x)
    i = 5
    e = np.zeros(disk8.size)
    e[i] = 1e-6
    assert g[i] == pytest.approx((J.value(x + e) - J.value(x - e)) / 2e-6, rel=1e-4)


def test_clamping_reported(disk8):
    J = DiscreteFunctional(make_integrand("power", disk8), disk8)
    vals = np.zeros(disk8.size)
    vals[10] = 1e12
    assert J.clamp_count(vals) > 0
    assert math.isfinite(J.value(vals))
    assert J.clamp_count(np.zeros(disk8.size)) == 0
    assert XI_CLAMP == 1e8


# ------------------------------------------------------ polarization check
def test_polarization_check_power(disk16):
    J = DiscreteFunctional(make_integrand("power", disk16), disk16)
    rep = check_polarization_monotone(J, trials=60, rng_seed=1)
    assert rep.passed and rep.violations == 0


def test_polarization_check_wiggle(disk16):
    J = DiscreteFunctional(make_integrand("wiggle", disk16, lam=1.0), disk16)
    rep = check_polarization_monotone(J, trials=60, rng_seed=2)
    assert rep.passed
    assert rep.tolerance == pytest.approx(10 * disk16.h)


def test_polarization_check_detects_nonsymmetric_weight(disk64):
    # penalizes mass near an off-centre point; polarizations pull mass there
    def ev(x, s, xi):
        w = 200.0 * np.exp(-8.0 * ((x[:, 0] + 0.2) ** 2 + x[:, 1] ** 2))
        return np.linalg.norm(xi, axis=-1) ** 1.5 + w * s
    j = Integrand("weighted", ev, _plain_growth(gamma1=1.0, phi1=200.0, gamma2=1.0, phi2=200.0))
    rep = check_polarization_monotone(DiscreteFunctional(j, disk64), trials=60, rng_seed=0)
    assert not rep.passed
    assert rep.violations > 0 and rep.worst_halfspace is not None


def test_polarization_check_needs_trials(disk8):
    with pytest.raises(ValueError):
        check_polarization_monotone(DiscreteFunctional(make_integrand("power", disk8), disk8), trials=0)


# ---------------------------------------------------------- a priori bound
def test_apriori_zero_function(disk16):
    J = DiscreteFunctional(make_integrand("power", disk16), disk16)
    z = GridFunction.zeros(disk16)
    b = apriori_gradient_bound(J, z, J.value(z.values), 0.3)
    assert b.bound >= 0 and b.measured == 0.0 and b.slack >= 0


def test_apriori_closed_form_when_gamma2_zero(disk16):
    J = DiscreteFunctional(make_integrand("power", disk16, p=1.5), disk16)
    assert J.integrand.growth.gamma2 == 0
    z = GridFunction.zeros(disk16)
    b = apriori_gradient_bound(J, z, 0.0, 0.5)
    assert b.bound == pytest.approx(((b.C1 + b.C2) / 1.0) ** (1 / 1.5), rel=1e-14)
    assert b.C1 == 0.5 and b.C2 == 0.0


def test_apriori_holds_on_sublevel_functions(disk16, rng):
    J = DiscreteFunctional(make_integrand("wiggle", disk16, lam=1.0), disk16)
    r2 = (disk16.centers**2).sum(axis=1)
    base = np.clip(1 - r2, 0, None)
    inf_est = min(J.value(a * base) for a in np.linspace(0, 2, 41))
    for _ in range(10):
        u = GridFunction(disk16, base * rng.uniform(0, 1) + 0.02 * rng.uniform(0, 1, disk16.size) * base)
        eps = J.value(u.values) - inf_est + 1e-3
        b = apriori_gradient_bound(J, u, inf_est, eps)
        assert b.measured <= b.bound
        assert b.embedding_constant > 0


def test_apriori_rejects_outside_sublevel(disk16):
    J = DiscreteFunctional(make_integrand("power", disk16), disk16)
    u = GridFunction(disk16, np.clip(1 - (disk16.centers**2).sum(axis=1), 0, None))
    with pytest.raises(ValueError):
        apriori_gradient_bound(J, u, -1.0, 0.1)


def test_apriori_violation_is_detected(disk16):
    j = make_integrand("power", disk16)
    lying = dataclasses.replace(j, growth=dataclasses.replace(j.growth, alpha=1000.0))
    J = DiscreteFunctional(lying, disk16)
    u = GridFunction(disk16, np.clip(1 - (disk16.centers**2).sum(axis=1), 0, None))
    with pytest.raises(AprioriBoundViolation):
        apriori_gradient_bound(J, u, J.value(u.values), 0.01)
