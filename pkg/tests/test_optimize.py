import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq, minimize

from aoisched.errors import ValidationError
from aoisched.model import SystemSpec
from aoisched.optimize import (AoiProgramCoefficients, UtilizationVector, aoi_coefficients, aoi_frequencies,
                               frequencies_from_utilizations, kkt_residual, paoi_frequencies, paoi_objective,
                               solve_aoi_fixed_point)

from conftest import random_system, unit_system


def simplex_points(rng, N, count):
    return rng.dirichlet(np.ones(N), size=count)


# --- PAoI -------------------------------------------------------------------


def test_paoi_frequencies_lossy_pair():
    sysm = SystemSpec.from_arrays([0.5, 0.5], [1, 1], [0.0, 0.75])
    tau, plan = paoi_frequencies(sysm)
    np.testing.assert_allclose(plan.f, [1 / 3, 2 / 3], rtol=1e-12)
    np.testing.assert_allclose(tau.tau, [1 / 3, 2 / 3], rtol=1e-12)
    assert plan.provenance == "paoi_closed_form"


def test_paoi_frequencies_sqrt_weights():
    _, plan = paoi_frequencies(SystemSpec.from_arrays([0.5, 0.25, 0.25], [1, 1, 1]))
    expected = np.sqrt([0.5, 0.25, 0.25]) / np.sqrt([0.5, 0.25, 0.25]).sum()
    np.testing.assert_allclose(plan.f, expected, rtol=1e-12)
    np.testing.assert_allclose(plan.f, [0.4142, 0.2929, 0.2929], atol=5e-5)


def test_paoi_frequencies_homogeneous():
    _, plan = paoi_frequencies(unit_system(7, drops=np.full(7, 0.3)))
    np.testing.assert_allclose(plan.f, np.full(7, 1 / 7), rtol=1e-12)


def test_paoi_objective_examples():
    assert paoi_objective(unit_system(1), [1.0]) == pytest.approx(2.0)
    assert paoi_objective(unit_system(2), [0.5, 0.5]) == pytest.approx(3.0)
    with pytest.raises(ValidationError):
        paoi_objective(unit_system(2), [1.0, 0.0])


@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_paoi_optimum_beats_perturbations_and_random_points(seed, N):
    rng = np.random.default_rng(seed)
    sysm = random_system(rng, N)
    tau, plan = paoi_frequencies(sysm)
    best = paoi_objective(sysm, tau.tau)
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            t = tau.tau.copy()
            d = min(1e-3, 0.5 * t[j])
            t[i] += d
            t[j] -= d
            assert best <= paoi_objective(sysm, t) + 1e-12 * best
    for t in simplex_points(rng, N, 100):
        assert best <= paoi_objective(sysm, t)
    # f and tau are consistent
    np.testing.assert_allclose(plan.f, frequencies_from_utilizations(tau.tau, sysm.s), rtol=1e-10)
    assert abs(tau.tau.sum() - 1) <= 1e-10


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_paoi_weight_scale_invariance(seed, k):
    rng = np.random.default_rng(seed)
    a = random_system(rng, 4)
    b = SystemSpec.from_arrays(a.raw_weights * k, a.s, a.p)
    np.testing.assert_allclose(paoi_frequencies(a)[1].f, paoi_frequencies(b)[1].f, rtol=1e-12)


def test_utilization_vector_validation():
    with pytest.raises(ValidationError):
        UtilizationVector(np.array([0.5, 0.6]))
    with pytest.raises(ValidationError):
        UtilizationVector(np.array([1.0, 0.0]))
    u = UtilizationVector(np.array([0.25, 0.75]))
    np.testing.assert_allclose(u.periods(unit_system(2)), [4, 4 / 3])


# --- AoI program coefficients -----------------------------------------------


def test_aoi_coefficients_examples():
    c = aoi_coefficients(unit_system(2), [0, 0])
    np.testing.assert_allclose(c.a_n, [0, 0])
    np.testing.assert_allclose(c.b_n, [0.5, 0.5])
    sysm = SystemSpec.from_arrays([0.5, 0.5], [1, 1], [0.0, 0.5])
    c = aoi_coefficients(sysm, [0, 0.5])
    np.testing.assert_allclose(c.a_n, [0, 0.125])
    np.testing.assert_allclose(c.b_n, [0.5, 1.5])
    exp = SystemSpec.from_arrays([0.3, 0.7], [2.0, 0.5], kinds="exponential")
    c = aoi_coefficients(exp, [0, 0])
    np.testing.assert_allclose(c.a_n, exp.w * exp.s)
    np.testing.assert_allclose(c.b_n, exp.w * exp.s)


def test_aoi_coefficients_reject_bad_ctilde():
    with pytest.raises(ValidationError):
        aoi_coefficients(unit_system(2), [0, -1])
    with pytest.raises(ValidationError):
        aoi_coefficients(unit_system(2), [0])


# --- fixed point ------------------------------------------------------------


def test_fixed_point_single_source():
    sol = solve_aoi_fixed_point(AoiProgramCoefficients(np.array([0.0]), np.array([1.0])))
    assert sol.x == pytest.approx(-1.0, rel=1e-12)
    assert sol.utilization.tau.tolist() == [1.0]


def test_fixed_point_symmetric_pair():
    sol = solve_aoi_fixed_point(AoiProgramCoefficients(np.zeros(2), np.array([0.5, 0.5])))
    assert sol.x == pytest.approx(-2.0, rel=1e-12)
    np.testing.assert_allclose(sol.utilization.tau, [0.5, 0.5], rtol=1e-12)


def test_fixed_point_asymmetric_pair_against_brent():
    coeffs = AoiProgramCoefficients(np.array([0.0, 0.125]), np.array([0.5, 1.5]))
    sol = solve_aoi_fixed_point(coeffs)
    ref = brentq(coeffs.fixed_point_residual, -1e3, -1e-14, xtol=1e-15, rtol=1e-15)
    assert sol.x == pytest.approx(ref, rel=1e-12)
    assert kkt_residual(coeffs, sol.utilization.tau) <= 1e-6
    assert abs(sol.residual) <= 1e-10


@pytest.mark.filterwarnings("ignore:Values in x were outside bounds")
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.booleans())
def test_fixed_point_matches_constrained_minimizer(seed, N, zero_a):
    rng = np.random.default_rng(seed)
    a = np.zeros(N) if zero_a else rng.uniform(0, 3, N)
    b = rng.uniform(0.05, 3, N)
    coeffs = AoiProgramCoefficients(a, b)
    sol = solve_aoi_fixed_point(coeffs)
    tau = sol.utilization.tau
    assert abs(coeffs.fixed_point_residual(sol.x)) <= 1e-10
    assert abs(tau.sum() - 1) <= 1e-9
    assert sol.x < coeffs.a
    assert kkt_residual(coeffs, tau) <= 1e-6
    # independent route: SLSQP on the convex program
    res = minimize(coeffs.objective, np.full(N, 1 / N), method="SLSQP",
                   bounds=[(1e-9, 1)] * N, constraints=[{"type": "eq", "fun": lambda t: t.sum() - 1}],
                   options={"ftol": 1e-14, "maxiter": 500})
    assert coeffs.objective(tau) <= res.fun + 1e-8 * abs(res.fun)
    for t in rng.dirichlet(np.ones(N), 20):
        assert coeffs.objective(tau) <= coeffs.objective(t) + 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_fixed_point_function_increasing(seed, N):
    rng = np.random.default_rng(seed)
    coeffs = AoiProgramCoefficients(rng.uniform(0, 2, N), rng.uniform(0.1, 2, N))
    xs = np.sort(coeffs.a - np.exp(rng.uniform(-8, 4, 30)))
    vals = [coeffs.fixed_point_residual(x) for x in xs]
    # strictly increasing wherever the sample points are distinct in float
    assert all(v0 < v1 for x0, x1, v0, v1 in zip(xs, xs[1:], vals, vals[1:]) if x1 - x0 > 1e-9 * abs(x0))


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_error_free_deterministic_gives_sqrt_law(seed, N):
    rng = np.random.default_rng(seed)
    sysm = SystemSpec.from_arrays(rng.uniform(0.1, 5, N), rng.uniform(0.2, 5, N))
    sol = aoi_frequencies(sysm, np.zeros(N))
    expected = np.sqrt(sysm.w * sysm.s)
    np.testing.assert_allclose(sol.utilization.tau, expected / expected.sum(), rtol=1e-10)
    np.testing.assert_allclose(sol.plan.f, paoi_frequencies(sysm)[1].f, rtol=1e-10)


def test_fixed_point_rejects_nonpositive_b():
    with pytest.raises(ValidationError):
        solve_aoi_fixed_point(AoiProgramCoefficients(np.zeros(2), np.array([0.5, 0.0])))


def test_fixed_point_extreme_scales():
    for a, b in [([1e6, 1e6 + 1], [1e-6, 1e-6]), ([0, 0, 0], [1e-12, 1e-12, 1e-12]),
                 ([1e-3, 50], [1e4, 1e-4])]:
        coeffs = AoiProgramCoefficients(np.array(a, float), np.array(b, float))
        sol = solve_aoi_fixed_point(coeffs)
        assert abs(sol.utilization.tau.sum() - 1) <= 1e-9
        assert abs(sol.residual) <= 1e-10
        assert math.isfinite(sol.x)
