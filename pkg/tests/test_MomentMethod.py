import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from CubicMetrology import AnalyticMetrology as am
from CubicMetrology.Errors import ConditioningError, ContractError, UndefinedRatioError
from CubicMetrology.FockCore import cubic_phase_state, expectation, make_ladder, pure_qfi, symmetrized
from CubicMetrology.MomentMethod import (MONOMIALS, MomentData, analytic_moments,
                                         build_observable_set, chi2_inv, chi2_inv_closed_form,
                                         chi2_inv_closed_form_n, commutator_table,
                                         covariance_table, estimator_bias_check, numeric_moments,
                                         xi2_inv, xi2_inv_state)

positive_r = st.floats(min_value=0.01, max_value=0.5)
squeezing = st.floats(min_value=0.0, max_value=0.6)
grid_r = st.floats(min_value=0.01, max_value=0.3)
grid_s = st.floats(min_value=0.0, max_value=0.5)


def test_set_sizes():
    assert [len(build_observable_set(k, 20)) for k in range(1, 5)] == [1, 2, 4, 6]
    with pytest.raises(ContractError):
        build_observable_set(5, 20)


def test_tables_match_fock_space():
    r, s = 0.05, 0.2
    state = cubic_phase_state(r, s, tolerance=1e-14, max_dim=320)
    numeric = numeric_moments(state, build_observable_set(4, state.dim))
    gamma = covariance_table(r, s)
    assert_allclose(numeric.gamma, gamma, rtol=1e-7, atol=1e-9 * np.abs(gamma).max())
    assert_allclose(numeric.c_vec, commutator_table(r, s), rtol=1e-7, atol=1e-9)


def test_saturation_on_both_paths(cubic_state):
    r, s = 0.05, 0.2
    assert_allclose(xi2_inv(r, s, 4), am.qfi_rs(r, s) / am.population(r, s), rtol=1e-8)
    n_op = make_ladder(cubic_state.dim).n
    ratio = pure_qfi(cubic_state, n_op) / expectation(cubic_state, n_op).real
    assert_allclose(xi2_inv_state(cubic_state, 4), ratio, rtol=1e-8)


@settings(max_examples=40, deadline=None)
@given(r=grid_r, s=grid_s)
def test_closed_forms_match_table_inversion(r, s):
    n = am.population(r, s)
    for k in range(1, 5):
        value = chi2_inv(analytic_moments(r, s, k))[0]
        assert_allclose(chi2_inv_closed_form(r, s, k), value, rtol=1e-8)
        assert_allclose(chi2_inv_closed_form_n(n, s, k), value, rtol=1e-8)


@settings(max_examples=40, deadline=None)
@given(r=positive_r, s=squeezing)
def test_hierarchy(r, s):
    values = [xi2_inv(r, s, k) for k in range(1, 5)]
    for lower, upper in zip(values, values[1:]):
        assert lower <= upper + 1e-9 * upper
    assert_allclose(values[-1], am.qfi_rs(r, s) / am.population(r, s), rtol=1e-8)


@settings(max_examples=30, deadline=None)
@given(r=positive_r, s=squeezing, scale=st.floats(min_value=0.1, max_value=10.0))
def test_chi2_is_invariant_under_rescaling(r, s, scale):
    md = analytic_moments(r, s, 3)
    weights = scale ** np.arange(1, 5)
    rescaled = MomentData(gamma=md.gamma * np.outer(weights, weights), c_vec=md.c_vec * weights,
                          k=3, source="analytic")
    assert_allclose(chi2_inv(rescaled)[0], chi2_inv(md)[0], rtol=1e-8)


def test_optimal_coefficients_have_unit_norm():
    value, m = chi2_inv(analytic_moments(0.1, 0.2, 4))
    assert value > 0
    assert np.linalg.norm(m) == pytest.approx(1.0)


def test_commutator_outside_covariance_range():
    md = MomentData(gamma=np.diag([1.0, 0.0]), c_vec=np.array([0.0, 1.0]), k=2, source="numeric")
    with pytest.raises(ConditioningError):
        chi2_inv(md)


def test_degenerate_covariance_inside_range():
    md = MomentData(gamma=np.diag([2.0, 0.0]), c_vec=np.array([1.0, 0.0]), k=2, source="numeric")
    value, m = chi2_inv(md)
    assert value == pytest.approx(0.5)
    assert_allclose(m, [1.0, 0.0])


def test_moment_data_checks():
    with pytest.raises(ContractError):
        MomentData(gamma=np.array([[1.0, 0.5], [0.0, 1.0]]), c_vec=np.zeros(2), k=2,
                   source="numeric")
    with pytest.raises(ContractError):
        MomentData(gamma=np.diag([1.0, -1.0]), c_vec=np.zeros(2), k=2, source="numeric")


def test_undefined_ratio_at_vacuum():
    with pytest.raises(UndefinedRatioError):
        xi2_inv(0.0, 0.0, 2)


def test_third_order_leading_term():
    n = 1e3
    optimum = am.optimal_squeezing(n)
    assert xi2_inv(optimum.r_opt_abs, optimum.s_opt, 3) / n == pytest.approx(32.0, rel=1e-2)


def test_observables_are_locally_unbiased():
    rng = np.random.default_rng(7)
    for r, s in zip(rng.uniform(0.01, 0.2, 10), rng.uniform(0.0, 0.4, 10)):
        state = cubic_phase_state(r, s)
        for a, b in MONOMIALS:
            assert abs(expectation(state, symmetrized(a, b, state.dim))) < 1e-10


def test_estimator_derivative_equals_commutator(cubic_state):
    obs_set = build_observable_set(4, cubic_state.dim)
    md = numeric_moments(cubic_state, obs_set)
    _, m = chi2_inv(md)
    mean, derivative = estimator_bias_check(cubic_state, obs_set, m)
    assert abs(mean) < 1e-10
    assert_allclose(derivative, -md.c_vec @ m, rtol=1e-6)


def test_estimator_length_mismatch(cubic_state):
    obs_set = build_observable_set(2, cubic_state.dim)
    with pytest.raises(ContractError):
        estimator_bias_check(cubic_state, obs_set, np.ones(3))


def test_mixed_state_moments_match_pure(cubic_state):
    obs_set = build_observable_set(3, cubic_state.dim)
    pure = numeric_moments(cubic_state, obs_set)
    mixed = numeric_moments(cubic_state.to_density(), obs_set)
    assert_allclose(mixed.gamma, pure.gamma, rtol=1e-10, atol=1e-12)
    assert_allclose(mixed.c_vec, pure.c_vec, rtol=1e-10, atol=1e-12)
    assert math.isclose(chi2_inv(mixed)[0], chi2_inv(pure)[0], rel_tol=1e-9)
