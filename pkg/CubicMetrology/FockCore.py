import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import qutip
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

from .Errors import (ContractError, InvalidDimensionError, InvalidStateError,
                     TruncationError)
from .Utils import FileHelper

# Quadrature convention: x = (a + a†)/√2, p = (a − a†)/(i√2), vacuum Var(x) = 1/2.
TRUNCATION_TOLERANCE = 1e-8
START_DIM = 40
DEFAULT_MAX_DIM = 1024
TAIL_LEVELS = 5
# relative change of <n> and <n²> allowed when the dimension is doubled
DOUBLING_TOLERANCE = 1e-7

T = TypeVar("T")


@dataclass(eq=False)
class OperatorMatrix():
    """
    Dataclass for an operator in the truncated number basis.

    Attributes:
        matrix (np.ndarray): Complex dim×dim matrix.
        hermitian_flag (bool): Marks the operator as Hermitian. Flagged matrices are checked
            against their conjugate transpose (relative to their largest entry) and then
            symmetrized exactly.

    Methods:
        dagger(): Conjugate transpose.
        commutator(other): [self, other].
        symmetric_product(other): (self·other + other·self)/2.
        power(k): k-th matrix power.
        spectrum: Cached Hermitian eigendecomposition (eigenvalues, eigenvectors).
    """
    matrix: np.ndarray
    hermitian_flag: bool = False

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise InvalidDimensionError(
                f"operator must be square, got shape {self.matrix.shape}")
        if self.hermitian_flag:
            scale = max(1.0, float(np.max(np.abs(self.matrix))))
            if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-12 * scale:
                raise ContractError("matrix flagged Hermitian is not Hermitian")
            self.matrix = (self.matrix + self.matrix.conj().T) / 2

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.matrix))))
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= atol * scale)

    def dagger(self) -> 'OperatorMatrix':
        return OperatorMatrix(self.matrix.conj().T, self.hermitian_flag)

    def commutator(self, other: 'OperatorMatrix') -> 'OperatorMatrix':
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(self.matrix @ other.matrix - other.matrix @ self.matrix)

    def symmetric_product(self, other: 'OperatorMatrix') -> 'OperatorMatrix':
        _check_dims(self.dim, other.dim)
        product = (self.matrix @ other.matrix + other.matrix @ self.matrix) / 2
        hermitian = self.hermitian_flag and other.hermitian_flag
        if hermitian:
            product = (product + product.conj().T) / 2
        return OperatorMatrix(product, hermitian)

    def power(self, k: int) -> 'OperatorMatrix':
        if k < 0:
            raise ValueError("power must be non-negative")
        return OperatorMatrix(np.linalg.matrix_power(self.matrix, k), self.hermitian_flag)

    @cached_property
    def spectrum(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.hermitian_flag:
            raise ContractError("spectrum requires a Hermitian operator")
        return np.linalg.eigh(self.matrix)

    def __matmul__(self, other: 'OperatorMatrix') -> 'OperatorMatrix':
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(self.matrix @ other.matrix)

    def __add__(self, other: 'OperatorMatrix') -> 'OperatorMatrix':
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(self.matrix + other.matrix,
                              self.hermitian_flag and other.hermitian_flag)

    def __sub__(self, other: 'OperatorMatrix') -> 'OperatorMatrix':
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(self.matrix - other.matrix,
                              self.hermitian_flag and other.hermitian_flag)

    def __mul__(self, scalar: complex) -> 'OperatorMatrix':
        hermitian = self.hermitian_flag and np.isreal(scalar)
        return OperatorMatrix(self.matrix * scalar, bool(hermitian))

    __rmul__ = __mul__

    def __neg__(self) -> 'OperatorMatrix':
        return OperatorMatrix(-self.matrix, self.hermitian_flag)


@dataclass(eq=False)
class FockState():
    """
    Dataclass for a normalized pure state in the truncated number basis.

    Attributes:
        amplitudes (np.ndarray): Complex amplitudes c_k, k = 0..dim-1.

    Methods:
        normalized(amplitudes): Build a state from an unnormalized vector.
        basis(k, dim): Number state |k>.
        tail_mass: Weight on the last TAIL_LEVELS levels.
        to_density(): Rank-one DensityOperator.
        dump(filepath) / load(filepath): Binary debug dump.
    """
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).ravel()
        if self.amplitudes.size < 2:
            raise InvalidDimensionError("state dimension must be at least 2",
                                        self.amplitudes.size)
        norm2 = float(np.vdot(self.amplitudes, self.amplitudes).real)
        if abs(norm2 - 1.0) > 1e-12:
            raise InvalidStateError(f"state norm² is {norm2}, expected 1")

    @staticmethod
    def normalized(amplitudes: np.ndarray) -> 'FockState':
        amplitudes = np.asarray(amplitudes, dtype=complex).ravel()
        norm = np.linalg.norm(amplitudes)
        if norm == 0:
            raise InvalidStateError("cannot normalize the zero vector")
        return FockState(amplitudes / norm)

    @staticmethod
    def basis(k: int, dim: int) -> 'FockState':
        if not 0 <= k < dim:
            raise InvalidDimensionError(f"level {k} outside dim={dim}", dim)
        amplitudes = np.zeros(dim, dtype=complex)
        amplitudes[k] = 1.0
        return FockState(amplitudes)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def tail_mass(self) -> float:
        return float(np.sum(np.abs(self.amplitudes[-TAIL_LEVELS:]) ** 2))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density(self) -> 'DensityOperator':
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def dump(self, filepath: str):
        FileHelper.dump_amplitudes(self.amplitudes, filepath)

    @staticmethod
    def load(filepath: str) -> 'FockState':
        return FockState.normalized(FileHelper.load_amplitudes(filepath))


@dataclass(eq=False)
class DensityOperator():
    """
    Dataclass for a mixed state: Hermitian, unit trace, positive semidefinite.

    Invariants are checked on construction with tolerance 1e-10.
    """
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise InvalidDimensionError(
                f"density matrix must be square, got shape {self.matrix.shape}")
        if np.max(np.abs(self.matrix - self.matrix.conj().T)) > 1e-10:
            raise InvalidStateError("density matrix is not Hermitian")
        self.matrix = (self.matrix + self.matrix.conj().T) / 2
        trace = float(np.trace(self.matrix).real)
        if abs(trace - 1.0) > 1e-10:
            raise InvalidStateError(f"density matrix trace is {trace}, expected 1")
        min_eigenvalue = float(self.spectrum[0][0])
        if min_eigenvalue < -1e-10:
            raise InvalidStateError(
                f"density matrix has eigenvalue {min_eigenvalue:.3e}", min_eigenvalue)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    @property
    def tail_mass(self) -> float:
        return float(np.sum(np.real(np.diag(self.matrix))[-TAIL_LEVELS:]))


State = Union[FockState, DensityOperator]


class Ladder(NamedTuple):
    a: OperatorMatrix
    a_dagger: OperatorMatrix
    n: OperatorMatrix
    x: OperatorMatrix
    p: OperatorMatrix


def _check_dims(dim_a: int, dim_b: int):
    if dim_a != dim_b:
        raise InvalidDimensionError(f"dimension mismatch: {dim_a} vs {dim_b}", dim_a)


def _read_only(op: OperatorMatrix) -> OperatorMatrix:
    # cached operators are shared between callers
    op.matrix.setflags(write=False)
    return op


@lru_cache(maxsize=16)
def make_ladder(dim: int) -> Ladder:
    """Annihilation, creation, number and quadrature operators at truncation dim; read-only."""
    if dim < 2:
        raise InvalidDimensionError(f"dim must be at least 2, got {dim}", dim)
    logging.debug(f"FockCore::make_ladder::{dim}")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    a_dagger = a.conj().T.copy()
    x = (a + a_dagger) / np.sqrt(2)
    p = (a - a_dagger) / (1j * np.sqrt(2))
    return Ladder(a=_read_only(OperatorMatrix(a)),
                  a_dagger=_read_only(OperatorMatrix(a_dagger)),
                  n=_read_only(OperatorMatrix(np.diag(np.arange(dim, dtype=float)), True)),
                  x=_read_only(OperatorMatrix(x, True)),
                  p=_read_only(OperatorMatrix(p, True)))


@lru_cache(maxsize=8)
def position_spectrum(dim: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues and real eigenvectors of the truncated position operator.

    The truncated x is tridiagonal with zero diagonal and off-diagonal √(k/2), so its eigenvalues
    are the roots of the Hermite polynomial H_dim. Both arrays are read-only.
    """
    if dim < 2:
        raise InvalidDimensionError(f"dim must be at least 2, got {dim}", dim)
    logging.debug(f"FockCore::position_spectrum::{dim}")
    eigenvalues, eigenvectors = eigh_tridiagonal(np.zeros(dim),
                                                 np.sqrt(np.arange(1, dim, dtype=float) / 2))
    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return eigenvalues, eigenvectors


def number_moments(state: 'State') -> Tuple[float, float]:
    """<n> and <n²> from the number-basis populations."""
    populations = (state.populations if isinstance(state, FockState)
                   else np.real(np.diag(state.matrix)))
    levels = np.arange(state.dim, dtype=float)
    return float(populations @ levels), float(populations @ levels ** 2)


@lru_cache(maxsize=64)
def symmetrized(x_power: int, p_power: int, dim: int) -> OperatorMatrix:
    """
    Full symmetrization S(x^a p^b): the average of every ordering of the monomial.

    Every arrangement of the b momentum factors among the a+b slots is built once.
    """
    ladder = make_ladder(dim)
    order = x_power + p_power
    if order == 0:
        return OperatorMatrix(np.eye(dim), True)
    words = list(combinations(range(order), p_power))
    total = np.zeros((dim, dim), dtype=complex)
    for p_slots in words:
        word = np.eye(dim, dtype=complex)
        for slot in range(order):
            word = word @ (ladder.p.matrix if slot in p_slots else ladder.x.matrix)
        total += word
    return _read_only(OperatorMatrix(total / len(words), True))


def check_truncation(state: FockState, tolerance: float = TRUNCATION_TOLERANCE,
                     missing_norm: float = 0.0) -> FockState:
    tail = state.tail_mass + max(missing_norm, 0.0)
    if tail > tolerance:
        raise TruncationError(tail, state.dim, tolerance)
    return state


def candidate_dims(start: int = START_DIM, max_dim: int = DEFAULT_MAX_DIM) -> List[int]:
    dims = []
    dim = min(start, max_dim)
    while dim < max_dim:
        dims.append(dim)
        dim *= 2
    dims.append(max_dim)
    return dims


def doubling_change(state: 'State', doubled: 'State') -> float:
    """Largest change of <n> and <n²> between two truncations, relative to max(1, |value|)."""
    return max(abs(a - b) / max(1.0, abs(b))
               for a, b in zip(number_moments(state), number_moments(doubled)))


def with_auto_dim(builder: Callable[[int], T],
                  dim: Optional[int] = None,
                  max_dim: int = DEFAULT_MAX_DIM,
                  start: int = START_DIM,
                  doubling_tolerance: Optional[float] = None) -> T:
    """
    Call builder(dim), doubling dim from start up to max_dim while it raises TruncationError.

    With doubling_tolerance set the builder must return states, and a candidate is accepted only
    when the state built at twice its dimension moves <n> and <n²> by at most that tolerance.
    That comparison build may exceed max_dim. With an explicit dim the builder is called once.
    """
    if dim is not None:
        return builder(dim)
    built = {}

    def build(d: int) -> T:
        if d not in built:
            built[d] = builder(d)
        return built[d]

    last_error: Optional[TruncationError] = None
    for candidate in candidate_dims(start, max_dim):
        try:
            result = build(candidate)
            if doubling_tolerance is not None:
                change = doubling_change(result, build(2 * candidate))
                if change > doubling_tolerance:
                    raise TruncationError(change, candidate, doubling_tolerance,
                                          "relative change of <n>, <n²> on doubling")
            return result
        except TruncationError as e:
            logging.debug(f"FockCore::with_auto_dim::{candidate}::{e}")
            last_error = e
    assert last_error is not None
    raise last_error


def squeezed_vacuum(s: float,
                    dim: Optional[int] = None,
                    tolerance: float = TRUNCATION_TOLERANCE,
                    max_dim: int = DEFAULT_MAX_DIM) -> FockState:
    """
    Momentum-squeezed vacuum exp[−s(a²−a†²)/2]|0> with Var(x) = e^{2s}/2.

    Amplitudes c_{2m} = (cosh s)^{-1/2} (tanh s)^m √((2m)!)/(2^m m!) are evaluated in log space.
    """
    def build(d: int) -> FockState:
        logging.debug(f"FockCore::squeezed_vacuum::{s}::{d}")
        amplitudes = np.zeros(d, dtype=complex)
        if s == 0:
            amplitudes[0] = 1.0
            return FockState(amplitudes)
        t = np.tanh(s)
        m = np.arange((d + 1) // 2)
        log_c = (-0.5 * np.log(np.cosh(s)) + m * np.log(abs(t))
                 + 0.5 * gammaln(2 * m + 1) - m * np.log(2.0) - gammaln(m + 1))
        amplitudes[0::2] = np.exp(log_c) * np.sign(t) ** m
        missing = 1.0 - float(np.sum(np.abs(amplitudes) ** 2))
        state = FockState.normalized(amplitudes)
        return check_truncation(state, tolerance, missing)

    return with_auto_dim(build, dim, max_dim)


def coherent_state(alpha: complex,
                   dim: int,
                   tolerance: float = TRUNCATION_TOLERANCE) -> FockState:
    k = np.arange(dim)
    log_mag = -abs(alpha) ** 2 / 2 + k * np.log(abs(alpha) if alpha != 0 else 1.0) \
        - 0.5 * gammaln(k + 1)
    amplitudes = np.exp(log_mag) * np.exp(1j * np.angle(alpha) * k)
    if alpha == 0:
        amplitudes = np.zeros(dim, dtype=complex)
        amplitudes[0] = 1.0
    missing = 1.0 - float(np.sum(np.abs(amplitudes) ** 2))
    return check_truncation(FockState.normalized(amplitudes), tolerance, missing)


def apply_gate(state: FockState,
               generator: OperatorMatrix,
               coefficient: float,
               tolerance: float = TRUNCATION_TOLERANCE) -> FockState:
    """
    Apply exp(i·coefficient·generator) through the generator's Hermitian eigendecomposition.

    Raises:
        ContractError: the generator is not flagged Hermitian or the norm drifts beyond 1e-10.
        TruncationError: the output carries more tail weight than tolerance.
    """
    if not generator.hermitian_flag:
        raise ContractError("gate generator must be Hermitian")
    _check_dims(state.dim, generator.dim)
    if coefficient == 0:
        return state
    logging.debug(f"FockCore::apply_gate::{state.dim}::{coefficient}")
    eigenvalues, eigenvectors = generator.spectrum
    amplitudes = eigenvectors @ (np.exp(1j * coefficient * eigenvalues)
                                 * (eigenvectors.conj().T @ state.amplitudes))
    norm = np.linalg.norm(amplitudes)
    if abs(norm - 1.0) > 1e-10:
        raise ContractError(f"gate changed the norm to {norm}")
    return check_truncation(FockState(amplitudes / norm), tolerance)


def rotate(state: State, theta: float) -> State:
    """Phase rotation exp(−iθn)."""
    phases = np.exp(-1j * theta * np.arange(state.dim))
    if isinstance(state, FockState):
        return FockState.normalized(phases * state.amplitudes)
    return DensityOperator(phases[:, None] * state.matrix * phases.conj()[None, :])


def apply_cubic_gate(state: FockState,
                     r: float,
                     tolerance: float = TRUNCATION_TOLERANCE) -> FockState:
    """
    Apply exp(i r x³) with x the truncated position operator.

    Same result as apply_gate on the truncated x·x·x, which shares its eigenvectors, without a
    dense eigendecomposition.
    """
    if r == 0:
        return state
    logging.debug(f"FockCore::apply_cubic_gate::{state.dim}::{r}")
    eigenvalues, eigenvectors = position_spectrum(state.dim)
    amplitudes = eigenvectors @ (np.exp(1j * r * eigenvalues ** 3)
                                 * (eigenvectors.T @ state.amplitudes))
    norm = np.linalg.norm(amplitudes)
    if abs(norm - 1.0) > 1e-10:
        raise ContractError(f"gate changed the norm to {norm}")
    return check_truncation(FockState(amplitudes / norm), tolerance)


def cubic_phase_state(r: float,
                      s: float,
                      dim: Optional[int] = None,
                      tolerance: float = TRUNCATION_TOLERANCE,
                      max_dim: int = DEFAULT_MAX_DIM,
                      doubling_tolerance: Optional[float] = DOUBLING_TOLERANCE) -> FockState:
    """
    exp(i r x³) applied to the momentum-squeezed vacuum.

    Without dim the dimension grows until the tail mass is below tolerance and doubling it
    changes <n> and <n²> by at most doubling_tolerance.
    """
    def build(d: int) -> FockState:
        return apply_cubic_gate(squeezed_vacuum(s, d, tolerance), r, tolerance)

    return with_auto_dim(build, dim, max_dim, doubling_tolerance=doubling_tolerance)


@lru_cache(maxsize=16)
def _cube_cached(dim: int) -> OperatorMatrix:
    x = make_ladder(dim).x.matrix
    return _read_only(OperatorMatrix(x @ x @ x, True))


def expectation(state: State, obs: OperatorMatrix) -> complex:
    _check_dims(state.dim, obs.dim)
    if isinstance(state, FockState):
        return complex(np.vdot(state.amplitudes, obs.matrix @ state.amplitudes))
    return complex(np.trace(state.matrix @ obs.matrix))


def variance(state: State, obs: OperatorMatrix) -> float:
    mean = expectation(state, obs)
    if isinstance(state, FockState):
        applied = obs.matrix @ state.amplitudes
        second = float(np.vdot(applied, applied).real)
    else:
        second = float(np.real(np.trace(state.matrix @ obs.matrix @ obs.matrix)))
    return second - abs(mean) ** 2


def pure_qfi(state: FockState, generator: OperatorMatrix) -> float:
    """Quantum Fisher information of a pure state: 4·Var(generator)."""
    return max(4.0 * variance(state, generator), 0.0)


def mixed_qfi(rho: DensityOperator,
              generator: OperatorMatrix,
              eigenvalue_cutoff: float = 1e-12) -> float:
    """
    Quantum Fisher information 2·Σ (λk−λl)²/(λk+λl)·|<k|G|l>|² over pairs with λk+λl > cutoff.
    """
    _check_dims(rho.dim, generator.dim)
    eigenvalues, eigenvectors = rho.spectrum
    if eigenvalues[0] < -1e-10:
        raise InvalidStateError(
            f"density matrix has eigenvalue {eigenvalues[0]:.3e}", float(eigenvalues[0]))
    logging.debug(f"FockCore::mixed_qfi::{rho.dim}")
    lam = np.clip(eigenvalues, 0.0, None)
    g = eigenvectors.conj().T @ generator.matrix @ eigenvectors
    sums = lam[:, None] + lam[None, :]
    diffs = lam[:, None] - lam[None, :]
    mask = sums > eigenvalue_cutoff
    weights = np.zeros_like(sums)
    weights[mask] = diffs[mask] ** 2 / sums[mask]
    return float(2.0 * np.sum(weights * np.abs(g) ** 2))


def fidelity(a: FockState, b: FockState) -> float:
    _check_dims(a.dim, b.dim)
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """½‖a − b‖₁ of two Hermitian matrices."""
    _check_dims(a.shape[0], b.shape[0])
    difference = a - b
    difference = (difference + difference.conj().T) / 2
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(difference))))


def wigner_grid(state: State,
                x_range: Sequence[float] = (-6.0, 6.0),
                p_range: Sequence[float] = (-6.0, 6.0),
                resolution: int = 201) -> np.ndarray:
    """
    Wigner function W[i, j] at p = p_axis[i], x = x_axis[j], normalized so ∫W dx dp = 1.

    Axes are np.linspace(*x_range, resolution) and np.linspace(*p_range, resolution). qutip's
    default scaling g = √2 matches the quadrature convention of this module.
    """
    data = (state.amplitudes.reshape(-1, 1) if isinstance(state, FockState) else state.matrix)
    logging.debug(f"FockCore::wigner_grid::{state.dim}::{resolution}")
    x_axis = np.linspace(x_range[0], x_range[1], resolution)
    p_axis = np.linspace(p_range[0], p_range[1], resolution)
    return np.asarray(qutip.wigner(qutip.Qobj(data), x_axis, p_axis), dtype=float)
