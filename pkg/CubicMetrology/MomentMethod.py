import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .AnalyticMetrology import population
from .Errors import ConditioningError, ContractError, InvalidDimensionError, UndefinedRatioError
from .FockCore import (FockState, OperatorMatrix, State, expectation, make_ladder,
                       rotate, symmetrized)

SET_SIZES = {1: 1, 2: 2, 3: 4, 4: 6}
# (x power, p power) of X1..X6
MONOMIALS = [(1, 0), (1, 1), (3, 0), (1, 2), (3, 1), (1, 3)]
LABELS = ["x", "S(xp)", "x^3", "S(xp^2)", "S(x^3p)", "S(xp^3)"]
PINV_CUTOFF = 1e-12


@dataclass(eq=False)
class ObservableSet():
    """
    Dataclass for an ordered family of Hermitian observables of order k.

    Attributes:
        k (int): Order, 1..4.
        members (List[OperatorMatrix]): Observables in fixed order.
        labels (List[str]): Symbolic names of the members.
        quadratures (Optional[List[Tuple[float, int]]]): (θ, power) of each member when the set is
            built from rotated quadratures M_θ^j; None for symmetrized monomials.
    """
    k: int
    members: List[OperatorMatrix]
    labels: List[str]
    quadratures: Optional[List[Tuple[float, int]]] = None

    def __post_init__(self):
        if len(self.members) != len(self.labels):
            raise ContractError("members and labels must have equal length")
        if any(not member.hermitian_flag for member in self.members):
            raise ContractError("observable set members must be Hermitian")

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def __len__(self) -> int:
        return len(self.members)


@dataclass(eq=False)
class MomentData():
    """
    Dataclass for the covariance matrix Γ and commutator vector C of an observable set.

    Attributes:
        gamma (np.ndarray): Symmetrized covariances ½<XiXj + XjXi> − <Xi><Xj>.
        c_vec (np.ndarray): −i<[n, Xj]>.
        k (int): Order of the set.
        source (str): 'analytic' or 'numeric'.
        labels (List[str]): Observable names.
    """
    gamma: np.ndarray
    c_vec: np.ndarray
    k: int
    source: str
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.c_vec = np.asarray(self.c_vec, dtype=float)
        scale = max(1.0, float(np.max(np.abs(self.gamma))))
        if np.max(np.abs(self.gamma - self.gamma.T)) > 1e-10 * scale:
            raise ContractError("covariance matrix is not symmetric")
        self.gamma = (self.gamma + self.gamma.T) / 2
        min_eigenvalue = float(np.linalg.eigvalsh(self.gamma)[0])
        if min_eigenvalue < -1e-9 * scale:
            raise ContractError(
                f"covariance matrix has eigenvalue {min_eigenvalue:.3e}")
        if self.source not in ("analytic", "numeric"):
            raise ValueError("source must be 'analytic' or 'numeric'")


def _check_order(k: int):
    if k not in SET_SIZES:
        raise ContractError(f"order k must be in 1..4, got {k}")


def build_observable_set(k: int, dim: int) -> ObservableSet:
    """Symmetrized monomials x, S(xp), x³, S(xp²), S(x³p), S(xp³) truncated to order k."""
    _check_order(k)
    size = SET_SIZES[k]
    members = [symmetrized(a, b, dim) for a, b in MONOMIALS[:size]]
    return ObservableSet(k=k, members=members, labels=LABELS[:size])


def covariance_table(r: float, s: float) -> np.ndarray:
    """Closed-form 6×6 covariance matrix of X1..X6 for the cubic phase state."""
    E = lambda k: math.exp(k * s)
    r2e6 = r * r * E(6)
    g = np.zeros((6, 6))
    g[0, 0] = E(2) / 2
    g[0, 1] = 9 / 4 * r * E(4)
    g[0, 2] = 3 / 4 * E(4)
    g[0, 3] = (135 * r2e6 + 2) / 8
    g[0, 4] = 45 / 8 * r * E(6)
    g[0, 5] = 21 / 16 * r * E(2) * (135 * r2e6 + 2)
    g[1, 1] = (135 * r2e6 + 4) / 8
    g[1, 2] = 45 / 8 * r * E(6)
    g[1, 3] = 27 / 16 * r * E(2) * (105 * r2e6 + 2)
    g[1, 4] = 3 / 16 * E(2) * (315 * r2e6 + 4)
    g[1, 5] = 3 / 32 * E(-2) * (45 * r2e6 * (567 * r2e6 + 10) + 8)
    g[2, 2] = 15 / 8 * E(6)
    g[2, 3] = 3 / 16 * E(2) * (315 * r2e6 - 2)
    g[2, 4] = 315 / 16 * r * E(8)
    g[2, 5] = 45 / 32 * r * E(4) * (567 * r2e6 - 2)
    g[3, 3] = 1 / 32 * E(-2) * (27 * r2e6 * (2835 * r2e6 + 52) + 28)
    g[3, 4] = 9 / 32 * r * E(4) * (2835 * r2e6 + 26)
    g[3, 5] = 3 / 64 * r * (945 * r2e6 * (891 * r2e6 + 16) + 124)
    g[4, 4] = 21 / 32 * E(4) * (405 * r2e6 + 4)
    g[4, 5] = 3 / 64 * (45 * r2e6 * (6237 * r2e6 + 50) - 8)
    g[5, 5] = 3 / 128 * E(-4) * (15 * r2e6 * (2457 * r2e6 * (891 * r2e6 + 16) + 356) + 112)
    return np.triu(g) + np.triu(g, 1).T


def commutator_table(r: float, s: float) -> np.ndarray:
    """Closed-form −i<[n, Xj]> for X1..X6."""
    E = lambda k: math.exp(k * s)
    r2e6 = r * r * E(6)
    return np.array([
        -3 / 2 * r * E(2),
        -27 / 4 * r * r * E(4) + math.sinh(2 * s),
        -27 / 4 * r * E(4),
        -3 / 8 * r * (135 * r2e6 - 12 * E(4) + 2),
        -3 / 8 * (135 * r2e6 - 2 * E(4) + 2),
        -3 / 16 * E(-4) * (15 * r2e6 * (189 * r2e6 - 18 * E(4) + 4) - 4 * E(4) + 4),
    ])


def analytic_moments(r: float, s: float, k: int) -> MomentData:
    _check_order(k)
    if s < 0:
        raise ValueError("squeezing strength s must be non-negative")
    size = SET_SIZES[k]
    return MomentData(gamma=covariance_table(r, s)[:size, :size],
                      c_vec=commutator_table(r, s)[:size],
                      k=k,
                      source="analytic",
                      labels=LABELS[:size])


def numeric_moments(state: State, obs_set: ObservableSet,
                    imaginary_tolerance: float = 1e-8) -> MomentData:
    """Moment data of any pure or mixed state by direct expectation values."""
    if state.dim != obs_set.dim:
        raise InvalidDimensionError(
            f"dimension mismatch: {state.dim} vs {obs_set.dim}", state.dim)
    logging.debug(f"MomentMethod::numeric_moments::{obs_set.k}::{state.dim}")
    n_op = make_ladder(state.dim).n
    size = len(obs_set)
    means = np.array([expectation(state, X).real for X in obs_set.members])
    gamma = np.zeros((size, size))
    if isinstance(state, FockState):
        applied = [X.matrix @ state.amplitudes for X in obs_set.members]
        for i in range(size):
            for j in range(i, size):
                gamma[i, j] = np.vdot(applied[i], applied[j]).real - means[i] * means[j]
    else:
        weighted = [state.matrix @ X.matrix for X in obs_set.members]
        for i in range(size):
            for j in range(i, size):
                gamma[i, j] = np.real(np.sum(weighted[i].T * obs_set.members[j].matrix)) \
                    - means[i] * means[j]
    gamma = np.triu(gamma) + np.triu(gamma, 1).T
    c_vec = np.zeros(size)
    for j, X in enumerate(obs_set.members):
        value = -1j * expectation(state, n_op.commutator(X))
        scale = max(1.0, abs(value))
        if abs(value.imag) > imaginary_tolerance * scale:
            raise ContractError(
                f"commutator entry {obs_set.labels[j]} has imaginary part {value.imag:.3e}")
        c_vec[j] = value.real
    return MomentData(gamma=gamma, c_vec=c_vec, k=obs_set.k, source="numeric",
                      labels=list(obs_set.labels))


def chi2_inv(md: MomentData, cutoff: float = PINV_CUTOFF) -> Tuple[float, np.ndarray]:
    """
    Optimized moment-matrix value C Γ⁺ Cᵀ and the unit-norm optimal coefficients Γ⁺ Cᵀ.

    Γ⁺ is the symmetric-eigendecomposition pseudo-inverse with relative cutoff on λ/λ_max.

    Raises:
        ConditioningError: C has weight on the discarded eigenspace of Γ.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(md.gamma)
    lam_max = float(eigenvalues[-1])
    c_norm = float(np.linalg.norm(md.c_vec))
    if lam_max <= 0:
        if c_norm > 0:
            raise ConditioningError("covariance matrix vanishes", math.inf)
        return 0.0, np.zeros_like(md.c_vec)
    keep = eigenvalues > cutoff * lam_max
    projections = eigenvectors.T @ md.c_vec
    discarded = float(np.linalg.norm(projections[~keep]))
    if c_norm > 0 and discarded > 1e-8 * c_norm:
        positive = eigenvalues[eigenvalues > 0]
        condition = lam_max / positive[0] if positive.size else math.inf
        raise ConditioningError("commutator vector lies outside the covariance range",
                                float(condition))
    m = eigenvectors[:, keep] @ (projections[keep] / eigenvalues[keep])
    value = float(md.c_vec @ m)
    norm = np.linalg.norm(m)
    if norm == 0:
        return 0.0, m
    return max(value, 0.0), m / norm


def xi2_inv(r: float, s: float, k: int) -> float:
    """Nonlinear squeezing coefficient χ⁻²₍ₖ₎/n from the closed-form moment tables."""
    n = population(r, s)
    if n <= 0:
        raise UndefinedRatioError("population is zero; ξ⁻² is undefined")
    return chi2_inv(analytic_moments(r, s, k))[0] / n


def xi2_inv_state(state: State, k: int) -> float:
    """Nonlinear squeezing coefficient of an arbitrary state with the symmetrized sets."""
    n = expectation(state, make_ladder(state.dim).n).real
    if n <= 0:
        raise UndefinedRatioError("population is zero; ξ⁻² is undefined")
    return chi2_inv(numeric_moments(state, build_observable_set(k, state.dim)))[0] / n


def chi2_inv_closed_form(r: float, s: float, k: int) -> float:
    _check_order(k)
    e = lambda a: math.exp(a * s)
    r2 = r * r
    chi1 = 4.5 * r2 * e(2)
    if k == 1:
        return chi1
    if k == 2:
        return chi1 + 4 * math.sinh(2 * s) ** 2 / (27 * r2 * e(6) + 2)
    if k == 3:
        return 0.1 * (9 * r2 * e(2) * (29 - 192 / (45 * r2 * e(6) + 8))
                      + 3645 * r2 * r2 * e(8) + 270 * r2 * e(6) + 5 * e(4) + 5 * e(-4) - 10)
    return 0.5 * (-2 + e(-4) + e(4) + 9 * e(2) * r2 + 54 * e(6) * r2 + 972 * e(8) * r2 * r2)


def chi2_inv_closed_form_n(n: float, s: float, k: int) -> float:
    _check_order(k)
    u = n - math.sinh(s) ** 2
    e2 = math.exp(2 * s)
    chi1 = 4 / 3 / e2 * u
    if k == 1:
        return chi1
    if k == 2:
        return chi1 + 4 * math.sinh(2 * s) ** 2 / (8 * e2 * u + 2)
    if k == 3:
        return (32 * u * u + 8 * e2 * u
                + 4 / 15 / e2 * u * (29 - 72 / (5 * e2 * u + 3)) + math.cosh(4 * s) - 1)
    return 128 / 3 * u * u + (4 / 3 / e2 + 8 * e2) * u + math.cosh(4 * s) - 1


def estimator_bias_check(state: FockState,
                         obs_set: ObservableSet,
                         m: np.ndarray,
                         h: float = 1e-4) -> Tuple[float, float]:
    """
    Mean of M = Σ mᵢXᵢ at θ = 0 and its θ-derivative under exp(−iθn) by central difference.

    ∂<M>/∂θ at θ = 0 equals −C·m.
    """
    m = np.asarray(m, dtype=float)
    if m.size != len(obs_set):
        raise ContractError("coefficient vector length differs from the set size")
    M = OperatorMatrix(sum(c * X.matrix for c, X in zip(m, obs_set.members)), True)
    mean_at_zero = expectation(state, M).real
    derivative = (expectation(rotate(state, h), M).real
                  - expectation(rotate(state, -h), M).real) / (2 * h)
    if abs(derivative) < 1e-12:
        logging.warning(
            f"MomentMethod::estimator_bias_check::degenerate estimator, derivative {derivative:.3e}")
    return mean_at_zero, derivative
