import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from numpy.polynomial import polynomial as P

from CubicMetrology import AnalyticMetrology as am
from CubicMetrology.Errors import InfeasiblePopulationError
from CubicMetrology.FockCore import (cubic_phase_state, expectation, make_ladder, number_moments,
                                     pure_qfi)

GOLDEN = (math.sqrt(5) - 1) / 2


def golden_section_max(f, a: float, b: float, tol: float = 1e-11) -> float:
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    while b - a > tol:
        if f(c) > f(d):
            b, d = d, c
            c = b - GOLDEN * (b - a)
        else:
            a, c = c, d
            d = a + GOLDEN * (b - a)
    return (a + b) / 2


@pytest.mark.parametrize("s", np.arange(1, 11) / 10)
def test_squeezed_vacuum_limit(s):
    n = math.sinh(s) ** 2
    assert abs(am.qfi_rs(0.0, s) - (math.cosh(4 * s) - 1)) <= 1e-12
    assert_allclose(am.qfi_rs(0.0, s), am.squeezed_vacuum_qfi(n), atol=1e-10)
    assert am.population(0.0, s) == pytest.approx(n)
    assert_allclose(am.population_second_moment(0.0, s),
                    0.5 * n * (1 + 3 * math.cosh(2 * s)), rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(r=st.floats(min_value=-2.0, max_value=2.0), s=st.floats(min_value=0.0, max_value=1.5))
def test_population_parametrization_round_trip(r, s):
    n = am.population(r, s)
    assert_allclose(am.cubicity_for_population(n, s), abs(r), rtol=1e-9, atol=1e-7)
    assert_allclose(am.qfi_ns(n, s), am.qfi_rs(r, s), rtol=1e-9, atol=1e-9)
    assert am.qfi_rs(r, s) == am.qfi_rs(-r, s)


def test_infeasible_population():
    with pytest.raises(InfeasiblePopulationError) as info:
        am.qfi_ns(0.1, 1.0)
    assert info.value.floor == pytest.approx(math.sinh(1.0) ** 2)
    with pytest.raises(InfeasiblePopulationError):
        am.cubicity_for_population(0.1, 1.0)


@settings(max_examples=30, deadline=None)
@given(n=st.floats(min_value=0.5, max_value=100.0), s=st.floats(min_value=0.01, max_value=0.5))
def test_derivative_matches_central_difference(n, s):
    h = 1e-5
    numeric = (am.qfi_ns(n, s + h) - am.qfi_ns(n, s - h)) / (2 * h)
    assert_allclose(am.qfi_ns_derivative(n, s), numeric, rtol=1e-5, atol=1e-6 * am.qfi_ns(n, s))


@pytest.mark.parametrize("n", [0.05, 0.2, 1.0, 10.0, 1e3, 1e5])
def test_ferrari_roots_solve_the_quartic(n):
    coefficients = [-34.0, 60 * (1 + 2 * n), 0.0, -40 * (1 + 2 * n), 14.0]
    for z in am.ferrari_roots(n):
        scale = max(abs(c) * abs(z) ** k for k, c in enumerate(coefficients))
        assert abs(P.polyval(z, coefficients)) <= 1e-9 * scale


@pytest.mark.parametrize("n", [0.1, 1.0, 10.0, 1e3])
def test_optimal_squeezing_matches_golden_section(n):
    optimum = am.optimal_squeezing(n)
    upper = min(am._max_feasible_s(n), 0.5)
    oracle = golden_section_max(lambda s: am.qfi_ns(n, s), 0.0, upper)
    assert_allclose(optimum.s_opt, oracle, atol=1e-6)
    assert optimum.stationarity_residual < 1e-6
    assert optimum.second_difference < 0
    assert_allclose(am.population(optimum.r_opt_abs, optimum.s_opt), n, rtol=1e-10)


def test_asymptotic_scaling():
    n = 1e3
    optimum = am.optimal_squeezing(n)
    assert_allclose(am.qfi_ns(n, optimum.s_opt) / n ** 2, 128 / 3, rtol=5e-3)


def test_large_population_optimum():
    s_inf, r_coeff = am.asymptotic_optimal()
    assert s_inf == pytest.approx(0.101366, abs=1e-6)
    optimum = am.optimal_squeezing(1e4)
    assert optimum.s_opt == pytest.approx(0.101366, abs=1e-3)
    assert optimum.r_opt_abs / (r_coeff * 100) == pytest.approx(1.0, rel=1e-2)
    assert am.squeezing_db(s_inf) == pytest.approx(0.880454, abs=1e-5)


def test_optimal_squeezing_bounded_above():
    for n in np.geomspace(0.01, 1e4, 40):
        assert am.optimal_squeezing(n).s_opt <= 0.101366 + 1e-9


def test_optimal_squeezing_rejects_zero_population():
    with pytest.raises(ValueError):
        am.optimal_squeezing(0.0)


def test_optimum_beats_squeezed_vacuum():
    for n in (0.1, 1.0, 10.0):
        assert am.optimal_squeezing(n).f_q_max > am.squeezed_vacuum_qfi(n)


def test_second_moment_matches_gaussian_polynomial_engine():
    r, s = 0.17, 0.35
    z, mean_n, mean_n2 = am.GaussianPolynomialState(s, (1.0,), (0.0, 0.0, 3 * r)).moments()
    assert z == pytest.approx(1.0)
    assert_allclose(mean_n, am.population(r, s), rtol=1e-12)
    assert_allclose(mean_n2, am.population_second_moment(r, s), rtol=1e-12)
    assert_allclose(4 * (mean_n2 - mean_n ** 2), am.qfi_rs(r, s), rtol=1e-10)


@pytest.mark.parametrize("r,s", [(0.0, 0.0), (0.04, 0.16), (0.1, 0.32), (0.12, 0.4), (0.15, 0.2),
                                 (0.2, 0.5)])
def test_qfi_matches_fock_space(r, s):
    state = cubic_phase_state(r, s)
    n_op = make_ladder(state.dim).n
    f_q = am.qfi_rs(r, s)
    assert abs(f_q - pure_qfi(state, n_op)) / (1 + f_q) < 1e-6
    assert_allclose(expectation(state, n_op).real, am.population(r, s), atol=1e-7)


@pytest.mark.slow
def test_qfi_matches_fock_space_on_grid():
    for r in np.linspace(0.0, 0.3, 7):
        for s in np.linspace(0.0, 0.5, 6):
            state = cubic_phase_state(r, s, max_dim=2048)
            mean_n, mean_n2 = number_moments(state)
            f_q = am.qfi_rs(r, s)
            assert abs(f_q - 4 * (mean_n2 - mean_n ** 2)) / (1 + f_q) < 1e-6
            assert abs(mean_n - am.population(r, s)) / (1 + f_q) < 1e-6


def test_displacement_never_beats_squeezed_vacuum():
    for r in np.linspace(0.0, 0.3, 7):
        for s in np.linspace(0.01, 1.0, 34):
            n = am.population(r, s)
            assert am.displacement_qfi(r, s) <= am.squeezed_vacuum_displacement_qfi(n) * (1 + 1e-12)


def test_displacement_of_squeezed_vacuum_is_optimal():
    s = 0.6
    n = math.sinh(s) ** 2
    assert_allclose(am.displacement_qfi(0.0, s), am.squeezed_vacuum_displacement_qfi(n), rtol=1e-12)


def test_cramer_rao_bound():
    assert am.cramer_rao_bound(4.0, 25) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        am.cramer_rao_bound(0.0, 1)
