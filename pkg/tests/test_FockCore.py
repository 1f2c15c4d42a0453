import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.linalg import solve_continuous_lyapunov

from CubicMetrology.Errors import (ContractError, InvalidDimensionError, InvalidStateError,
                                   TruncationError)
from CubicMetrology.FockCore import (DensityOperator, FockState, OperatorMatrix, apply_gate,
                                     candidate_dims, coherent_state, cubic_phase_state,
                                     expectation, fidelity, make_ladder, mixed_qfi,
                                     number_moments, position_spectrum, pure_qfi, rotate,
                                     squeezed_vacuum, symmetrized, trace_distance, variance,
                                     wigner_grid)


def test_ladder_commutator_away_from_cutoff():
    ladder = make_ladder(20)
    commutator = ladder.a.matrix @ ladder.a_dagger.matrix - ladder.a_dagger.matrix @ ladder.a.matrix
    assert_allclose(commutator[:-1, :-1], np.eye(19), atol=1e-12)
    xp = ladder.x.commutator(ladder.p).matrix
    assert_allclose(xp[:-1, :-1], 1j * np.eye(19), atol=1e-12)


def test_ladder_rejects_small_dim():
    with pytest.raises(InvalidDimensionError):
        make_ladder(1)


def test_hermitian_flag_is_checked():
    with pytest.raises(ContractError):
        OperatorMatrix(np.array([[0, 1], [0, 0]]), True)
    with pytest.raises(ContractError):
        OperatorMatrix(np.eye(2)).spectrum


def test_symmetrized_xp():
    ladder = make_ladder(12)
    expected = (ladder.x.matrix @ ladder.p.matrix + ladder.p.matrix @ ladder.x.matrix) / 2
    assert_allclose(symmetrized(1, 1, 12).matrix, expected, atol=1e-12)
    assert symmetrized(3, 1, 12).hermitian_flag


@pytest.mark.parametrize("s", [0.0, 0.3, 0.8])
def test_squeezed_vacuum_moments(s):
    state = squeezed_vacuum(s, tolerance=1e-12)
    ladder = make_ladder(state.dim)
    assert_allclose(expectation(state, ladder.n).real, math.sinh(s) ** 2, atol=1e-10)
    assert_allclose(variance(state, ladder.x), math.exp(2 * s) / 2, rtol=1e-9)
    assert_allclose(variance(state, ladder.p), math.exp(-2 * s) / 2, rtol=1e-9)
    assert_allclose(pure_qfi(state, ladder.n), math.cosh(4 * s) - 1, atol=1e-9)


def test_explicit_dim_too_small_raises_truncation():
    with pytest.raises(TruncationError) as info:
        squeezed_vacuum(1.5, dim=10)
    assert info.value.dim == 10
    assert info.value.tail_mass > 1e-8


def test_auto_dim_grows_until_converged():
    assert candidate_dims(40, 256) == [40, 80, 160, 256]
    state = squeezed_vacuum(1.2)
    assert state.dim > 40
    assert state.tail_mass <= 1e-8


def test_auto_dim_cap_raises():
    with pytest.raises(TruncationError):
        cubic_phase_state(0.5, 0.6, max_dim=30)


def test_doubling_check_rejects_dims_accepted_on_tail_mass():
    state = cubic_phase_state(0.15, 0.2)
    assert state.dim == 160
    tail_only = cubic_phase_state(0.15, 0.2, max_dim=80, doubling_tolerance=None)
    assert tail_only.dim == 80
    with pytest.raises(TruncationError) as info:
        cubic_phase_state(0.15, 0.2, max_dim=80)
    assert info.value.dim == 80
    assert "on doubling" in str(info.value)


def test_number_moments(squeezed_state):
    mean_n, mean_n2 = number_moments(squeezed_state)
    n_op = make_ladder(squeezed_state.dim).n
    assert_allclose(mean_n, expectation(squeezed_state, n_op).real, atol=1e-12)
    assert_allclose(mean_n2, expectation(squeezed_state, n_op @ n_op).real, atol=1e-12)
    assert_allclose(number_moments(squeezed_state.to_density()), (mean_n, mean_n2), atol=1e-12)


def test_position_spectrum_diagonalizes_truncated_x():
    eigenvalues, eigenvectors = position_spectrum(12)
    x = make_ladder(12).x.matrix
    assert_allclose(eigenvalues, np.linalg.eigvalsh(x), atol=1e-12)
    assert_allclose(x @ eigenvectors, eigenvectors * eigenvalues, atol=1e-12)


def test_cached_operators_are_read_only():
    with pytest.raises(ValueError):
        make_ladder(10).x.matrix[0, 0] = 1.0
    with pytest.raises(ValueError):
        symmetrized(2, 1, 10).matrix[0, 0] = 1.0
    with pytest.raises(ValueError):
        position_spectrum(10)[0][0] = 1.0


def test_trace_distance():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.5, 0.5])
    assert trace_distance(a, b) == pytest.approx(0.5)
    assert trace_distance(a, a) == 0.0


def test_coherent_state_population():
    state = coherent_state(1.5 + 0.5j, 60)
    assert_allclose(expectation(state, make_ladder(60).n).real, abs(1.5 + 0.5j) ** 2, rtol=1e-10)


def test_apply_gate_is_unitary(cubic_state):
    assert_allclose(np.linalg.norm(cubic_state.amplitudes), 1.0, atol=1e-12)
    with pytest.raises(ContractError):
        apply_gate(cubic_state, OperatorMatrix(make_ladder(cubic_state.dim).a.matrix), 0.1)


def test_cubic_gate_preserves_position_distribution(cubic_state):
    ladder = make_ladder(cubic_state.dim)
    assert_allclose(variance(cubic_state, ladder.x), math.exp(0.4) / 2, rtol=1e-8)


def test_rotation_keeps_population(cubic_state):
    n_op = make_ladder(cubic_state.dim).n
    rotated = rotate(cubic_state, 0.7)
    assert_allclose(expectation(rotated, n_op), expectation(cubic_state, n_op), atol=1e-12)
    rho = rotate(cubic_state.to_density(), 0.7)
    assert_allclose(rho.matrix, rotated.to_density().matrix, atol=1e-12)


def test_density_invariants():
    with pytest.raises(InvalidStateError):
        DensityOperator(np.diag([0.5, 0.6]))
    with pytest.raises(InvalidStateError) as info:
        DensityOperator(np.diag([1.2, -0.2]))
    assert info.value.min_eigenvalue == pytest.approx(-0.2)
    with pytest.raises(InvalidStateError):
        FockState(np.array([1.0, 1.0]))


def test_mixed_qfi_of_pure_state_matches_pure_qfi(cubic_state):
    n_op = make_ladder(cubic_state.dim).n
    assert_allclose(mixed_qfi(cubic_state.to_density(), n_op), pure_qfi(cubic_state, n_op),
                    rtol=1e-8)


def test_mixed_qfi_matches_sld_solution(squeezed_state):
    dim = squeezed_state.dim
    weights = 0.8 ** np.arange(dim)
    rho = 0.7 * squeezed_state.to_density().matrix + 0.3 * np.diag(weights / weights.sum())
    n = make_ladder(dim).n.matrix
    d_rho = -1j * (n @ rho - rho @ n)
    sld = solve_continuous_lyapunov(rho, 2 * d_rho)
    oracle = float(np.real(np.trace(rho @ sld @ sld)))
    assert_allclose(mixed_qfi(DensityOperator(rho), make_ladder(dim).n), oracle, rtol=1e-6)


def test_fidelity_and_dump(tmp_path, cubic_state):
    assert fidelity(cubic_state, cubic_state) == pytest.approx(1.0)
    filepath = str(tmp_path / "cubic.bin")
    cubic_state.dump(filepath)
    assert fidelity(FockState.load(filepath), cubic_state) == pytest.approx(1.0, abs=1e-14)


def test_wigner_of_vacuum_and_normalization(squeezed_state):
    vacuum = FockState.basis(0, 10)
    w = wigner_grid(vacuum, (-1.0, 1.0), (-1.0, 1.0), 3)
    assert w[1, 1] == pytest.approx(1 / math.pi)
    resolution = 161
    grid = wigner_grid(squeezed_state, (-8.0, 8.0), (-8.0, 8.0), resolution)
    step = 16.0 / (resolution - 1)
    assert grid.sum() * step * step == pytest.approx(1.0, abs=1e-4)


def test_wigner_of_single_photon():
    one = FockState.basis(1, 10)
    origin = wigner_grid(one, (-1.0, 1.0), (-1.0, 1.0), 3)
    assert origin[1, 1] == pytest.approx(-1 / math.pi)
    resolution = 201
    grid = wigner_grid(one, (-4.0, 4.0), (-8.0, 8.0), resolution)
    x = np.linspace(-4.0, 4.0, resolution)
    marginal = grid.sum(axis=0) * 16.0 / (resolution - 1)
    assert_allclose(marginal, 2 * x ** 2 * np.exp(-x ** 2) / math.sqrt(math.pi), atol=1e-8)


def test_wigner_negativity_of_cubic_state():
    state = cubic_phase_state(0.3, 0.2)
    assert wigner_grid(state, resolution=81).min() < -1e-3


@settings(max_examples=20, deadline=None)
@given(r=st.floats(min_value=0.0, max_value=0.1), s=st.floats(min_value=0.0, max_value=0.4))
def test_qfi_is_even_in_cubicity(r, s):
    plus = cubic_phase_state(r, s)
    minus = cubic_phase_state(-r, s, dim=plus.dim)
    n_op = make_ladder(plus.dim).n
    assert_allclose(pure_qfi(plus, n_op), pure_qfi(minus, n_op), rtol=1e-9, atol=1e-12)
