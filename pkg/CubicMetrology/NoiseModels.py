import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb, factorial2

from .AnalyticMetrology import CubicParams, optimal_squeezing
from .Errors import (ContractError, IntegratorError, TruncationError,
                     UndefinedRatioError)
from .FockCore import (DEFAULT_MAX_DIM, TRUNCATION_TOLERANCE, DensityOperator, FockState,
                       OperatorMatrix, State, cubic_phase_state, expectation, make_ladder,
                       mixed_qfi, symmetrized, trace_distance)
from .GridHandler import GridHandler
from .MomentMethod import (MomentData, ObservableSet, build_observable_set, chi2_inv,
                           numeric_moments)
from .Report import SensitivityReport, SensitivityReportList

DEFAULT_STEPS = 200
# h · (spectral range of H + ‖L†L‖) per RK4 step
STABILITY_BOUND = 1.0
# trace distance allowed between the results at h and h/2
HALVING_TOLERANCE = 1e-7
MAX_STEPS = 2 ** 20
TRACE_DRIFT_LIMIT = 1e-6
# most negative eigenvalue clipped to zero instead of raising
POSITIVITY_LIMIT = 1e-7
OPERATING_POINT_N = 0.2

# (θ, power) of the accessible quadrature sets, grouped by power
ACCESSIBLE_QUADRATURES = {
    1: [0.0, math.pi / 2],
    2: [0.0, math.pi / 2, math.pi / 4],
    3: [0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4],
    4: [0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4, math.pi / 6],
}


@dataclass
class LossConfig():
    """
    Dataclass for photon loss during state preparation.

    Attributes:
        gamma (float): Loss rate of the jump operator √γ·a.
        t1 (float): Duration of the squeezing stage.
        t2 (float): Duration of the cubic stage.
        steps (int): Minimum RK4 steps per stage; raised automatically for stability.
        halving_tolerance (float): Step-halving agreement required per stage, None to skip it.
    """
    gamma: float
    t1: float = 1.0
    t2: float = 1.0
    steps: int = DEFAULT_STEPS
    halving_tolerance: Optional[float] = HALVING_TOLERANCE

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.t1 <= 0 or self.t2 <= 0:
            raise ValueError("evolution times must be positive")
        if self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if not math.isfinite(self.gamma * max(self.t1, self.t2)):
            raise ValueError("gamma·t must be finite")


@dataclass
class DetectionNoise():
    """Additive Gaussian noise of standard deviation sigma on every quadrature outcome."""
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def moment(self, m: int) -> float:
        """E[Δ^m]: (m−1)!!σ^m for even m, 0 for odd m."""
        if m == 0:
            return 1.0
        if m % 2:
            return 0.0
        return float(factorial2(m - 1, exact=True)) * self.sigma ** m


def _to_density(matrix: np.ndarray, steps: int) -> DensityOperator:
    matrix = (matrix + matrix.conj().T) / 2
    drift = abs(float(np.trace(matrix).real) - 1.0)
    if drift > TRACE_DRIFT_LIMIT:
        raise IntegratorError(drift, steps)
    if drift > 1e-8:
        logging.warning(f"NoiseModels::evolve_lindblad::trace drift {drift:.3e}")
    matrix = matrix / np.trace(matrix).real
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    if eigenvalues[0] < -POSITIVITY_LIMIT:
        raise IntegratorError(drift, steps,
                              f"negative eigenvalue {eigenvalues[0]:.3e} after {steps} steps; "
                              f"the integrated state is not positive")
    if eigenvalues[0] < 0:
        eigenvalues = np.clip(eigenvalues, 0.0, None)
        matrix = (eigenvectors * eigenvalues) @ eigenvectors.conj().T
        matrix = matrix / np.trace(matrix).real
    return DensityOperator(matrix)


def _rk4(rho0: np.ndarray, derivative: Callable[[np.ndarray], np.ndarray],
         t: float, steps: int) -> np.ndarray:
    dt = t / steps
    rho = rho0.copy()
    for _ in range(steps):
        k1 = derivative(rho)
        k2 = derivative(rho + 0.5 * dt * k1)
        k3 = derivative(rho + 0.5 * dt * k2)
        k4 = derivative(rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = (rho + rho.conj().T) / 2
    return rho


def evolve_lindblad(rho0: DensityOperator,
                    h: OperatorMatrix,
                    jump: OperatorMatrix,
                    t: float,
                    steps: int = DEFAULT_STEPS,
                    stability_bound: float = STABILITY_BOUND,
                    halving_tolerance: Optional[float] = HALVING_TOLERANCE,
                    max_steps: int = MAX_STEPS) -> DensityOperator:
    """
    Integrate dρ/dt = −i[H,ρ] + LρL† − ½{L†L,ρ} over time t with fixed-step RK4.

    The step count is raised so that h·(spectral range of H + ‖L†L‖) stays below stability_bound.
    With halving_tolerance set, the step count is then doubled until halving the step moves the
    final state by at most that trace distance, and the finer result is returned.

    Raises:
        ContractError: H is not Hermitian.
        IntegratorError: the trace drifts by more than 1e-6, the result has an eigenvalue below
            −POSITIVITY_LIMIT, or step halving does not agree within max_steps.
    """
    if not h.hermitian_flag:
        raise ContractError("Hamiltonian must be Hermitian")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return rho0
    L = jump.matrix
    decay = L.conj().T @ L
    eigenvalues = h.spectrum[0]
    rate = float(eigenvalues[-1] - eigenvalues[0]) + float(np.linalg.norm(decay, 2))
    required = math.ceil(t * rate / stability_bound)
    if required > steps:
        logging.warning(f"NoiseModels::evolve_lindblad::steps raised {steps} -> {required}")
        steps = required
    logging.debug(f"NoiseModels::evolve_lindblad::{rho0.dim}::{t}::{steps}")
    h_eff = h.matrix - 0.5j * decay
    L_dagger = L.conj().T

    def derivative(rho: np.ndarray) -> np.ndarray:
        # rho is Hermitian, so rho·H_eff† = (H_eff·rho)†
        applied = h_eff @ rho
        return -1j * (applied - applied.conj().T) + L @ rho @ L_dagger

    rho = _rk4(rho0.matrix, derivative, t, steps)
    while halving_tolerance is not None:
        if 2 * steps > max_steps:
            raise IntegratorError(0.0, steps,
                                  f"step halving did not agree to {halving_tolerance:.1e} "
                                  f"within {max_steps} steps")
        finer = _rk4(rho0.matrix, derivative, t, 2 * steps)
        distance = trace_distance(rho, finer)
        steps, rho = 2 * steps, finer
        logging.debug(f"NoiseModels::evolve_lindblad::halving::{steps}::{distance:.3e}")
        if distance <= halving_tolerance:
            break
    return _to_density(rho, steps)


def preparation_hamiltonians(params: CubicParams, cfg: LossConfig,
                             dim: int) -> Tuple[OperatorMatrix, OperatorMatrix]:
    """H₁ = i s′(a†² − a²)/2 and H₂ = −r′x³ with s′ = s/t₁, r′ = r/t₂."""
    ladder = make_ladder(dim)
    a2 = ladder.a.matrix @ ladder.a.matrix
    h1 = 0.5j * (params.s / cfg.t1) * (a2.conj().T - a2)
    x = ladder.x.matrix
    h2 = -(params.r / cfg.t2) * (x @ x @ x)
    return OperatorMatrix(h1, True), OperatorMatrix(h2, True)


def lossy_cubic_state(params: CubicParams,
                      cfg: LossConfig,
                      dim: Optional[int] = None,
                      tolerance: float = TRUNCATION_TOLERANCE,
                      max_dim: int = DEFAULT_MAX_DIM) -> DensityOperator:
    """
    Vacuum evolved under (H₁, loss) for t₁ and then under (H₂, loss) for t₂.

    Without dim the truncation of the lossless cubic state (capped at max_dim) is used.
    """
    if dim is None:
        dim = cubic_phase_state(params.r, params.s, tolerance=tolerance, max_dim=max_dim).dim
    logging.debug(f"NoiseModels::lossy_cubic_state::{params.r}::{params.s}::{cfg.gamma}::{dim}")
    ladder = make_ladder(dim)
    jump = math.sqrt(cfg.gamma) * ladder.a
    h1, h2 = preparation_hamiltonians(params, cfg, dim)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    state = DensityOperator(rho)
    state = evolve_lindblad(state, h1, jump, cfg.t1, cfg.steps,
                            halving_tolerance=cfg.halving_tolerance)
    state = evolve_lindblad(state, h2, jump, cfg.t2, cfg.steps,
                            halving_tolerance=cfg.halving_tolerance)
    if state.tail_mass > tolerance:
        raise TruncationError(state.tail_mass, dim, tolerance)
    return state


def quadrature(theta: float, dim: int) -> OperatorMatrix:
    """M_θ = cos θ x + sin θ p."""
    ladder = make_ladder(dim)
    return OperatorMatrix(math.cos(theta) * ladder.x.matrix + math.sin(theta) * ladder.p.matrix,
                          True)


def accessible_set(k: int, dim: int) -> ObservableSet:
    """Powers M_θ^j, j = 1..k, at the angles reachable by homodyne detection."""
    if k not in ACCESSIBLE_QUADRATURES:
        raise ContractError(f"order k must be in 1..4, got {k}")
    members, labels, quadratures = [], [], []
    for power in range(1, k + 1):
        for theta in ACCESSIBLE_QUADRATURES[power]:
            members.append(quadrature(theta, dim).power(power))
            labels.append(f"M({theta:.6f})^{power}")
            quadratures.append((theta, power))
    return ObservableSet(k=k, members=members, labels=labels, quadratures=quadratures)


# targets X1..X6 as (label, x power, p power)
_IDENTITY_TARGETS = [("x", 1, 0), ("S(xp)", 1, 1), ("x^3", 3, 0), ("S(xp^2)", 1, 2),
                     ("S(x^3p)", 3, 1), ("S(xp^3)", 1, 3)]


def identity_weights(x_power: int, p_power: int) -> Tuple[List[float], np.ndarray]:
    """
    Angles and weights w with Σ w_i M_{θ_i}^j = S(x^a p^b), j = a + b.

    M_θ^j expands as Σ_m C(j,m) cos^{j−m}θ sin^mθ S(x^{j−m}p^m), so the weights solve a
    square linear system over the angles of power j.
    """
    j = x_power + p_power
    angles = ACCESSIBLE_QUADRATURES[j]
    if j == 1:
        angles = angles[:1] if p_power == 0 else angles[1:]
        return angles, np.array([1.0])
    expansion = np.array([[comb(j, m, exact=True) * math.cos(theta) ** (j - m) * math.sin(theta) ** m
                           for m in range(j + 1)] for theta in angles])
    target = np.zeros(j + 1)
    target[p_power] = 1.0
    return angles, np.linalg.solve(expansion.T, target)


def decomposition_identities(dim: int) -> List[Tuple[str, OperatorMatrix, OperatorMatrix]]:
    """(label, S(·) operator, reconstruction from accessible quadrature powers) for X1..X6."""
    identities = []
    for label, x_power, p_power in _IDENTITY_TARGETS:
        angles, weights = identity_weights(x_power, p_power)
        j = x_power + p_power
        reconstruction = sum(w * quadrature(theta, dim).power(j).matrix
                             for theta, w in zip(angles, weights))
        identities.append((label, symmetrized(x_power, p_power, dim),
                           OperatorMatrix(reconstruction, True)))
    return identities


class QuadratureMoments:
    """
    Raw moments of rotated quadratures of one state.

    The state is held as columns V with ρ = VV†, so pure and mixed states share one code path.
    Means ⟨M_θ^j⟩ are available up to j = 2·max_power.
    """

    def __init__(self, state: State, angles: Sequence[float], max_power: int):
        if isinstance(state, FockState):
            columns = state.amplitudes[:, None]
        else:
            eigenvalues, eigenvectors = state.spectrum
            keep = eigenvalues > 1e-14
            columns = eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])
        self.max_power = max_power
        self.angles = list(angles)
        self._number_columns = make_ladder(state.dim).n.matrix @ columns
        self._applied: Dict[float, List[np.ndarray]] = {}
        for theta in self.angles:
            M = quadrature(theta, state.dim).matrix
            powers = [columns]
            for _ in range(max_power):
                powers.append(M @ powers[-1])
            self._applied[theta] = powers

    def _powers(self, theta: float, j: int) -> np.ndarray:
        if theta not in self._applied or j > self.max_power:
            raise ContractError(f"raw moment M({theta})^{j} was not prepared")
        return self._applied[theta][j]

    def joint(self, theta: float, u: int, phi: float, v: int) -> float:
        """½⟨{M_θ^u, M_φ^v}⟩."""
        return float(np.real(np.vdot(self._powers(theta, u), self._powers(phi, v))))

    def mean(self, theta: float, j: int) -> float:
        if j > 2 * self.max_power:
            raise ContractError(f"raw moment of order {j} exceeds {2 * self.max_power}")
        first = min(j, self.max_power)
        return self.joint(theta, first, theta, j - first)

    def commutator(self, theta: float, j: int) -> float:
        """−i⟨[n, M_θ^j]⟩."""
        return 2.0 * float(np.imag(np.vdot(self._number_columns, self._powers(theta, j))))


def noisy_moments(state: State, k: int, noise: DetectionNoise) -> MomentData:
    """
    Covariances and commutators of noisy outcomes (M_θ + Δ)^j on the accessible set.

    Outcomes of one angle share one noise sample; distinct angles are measured in separate runs
    with independent noise.
    """
    obs_set = accessible_set(k, state.dim)
    logging.debug(f"NoiseModels::noisy_moments::{k}::{noise.sigma}::{state.dim}")
    raw = QuadratureMoments(state, ACCESSIBLE_QUADRATURES[k], k)
    mu = [noise.moment(m) for m in range(2 * k + 1)]

    def noisy_mean(theta: float, j: int) -> float:
        return sum(comb(j, m, exact=True) * mu[m] * raw.mean(theta, j - m)
                   for m in range(0, j + 1, 2))

    def noisy_joint(theta: float, u: int, phi: float, v: int) -> float:
        if theta == phi:
            return noisy_mean(theta, u + v)
        return sum(comb(u, a, exact=True) * comb(v, b, exact=True) * mu[a] * mu[b]
                   * raw.joint(theta, u - a, phi, v - b)
                   for a in range(0, u + 1, 2) for b in range(0, v + 1, 2))

    items = obs_set.quadratures
    size = len(items)
    means = np.array([noisy_mean(theta, j) for theta, j in items])
    gamma = np.zeros((size, size))
    for i, (theta, u) in enumerate(items):
        for j in range(i, size):
            phi, v = items[j]
            gamma[i, j] = noisy_joint(theta, u, phi, v) - means[i] * means[j]
    gamma = np.triu(gamma) + np.triu(gamma, 1).T
    c_vec = np.array([sum(comb(j, m, exact=True) * mu[m] * raw.commutator(theta, j - m)
                          for m in range(0, j, 2))
                      for theta, j in items])
    return MomentData(gamma=gamma, c_vec=c_vec, k=k, source="numeric",
                      labels=list(obs_set.labels))


def _population(state: State) -> float:
    n = expectation(state, make_ladder(state.dim).n).real
    if n <= 0:
        raise UndefinedRatioError("population is zero; ξ⁻² is undefined")
    return n


def noisy_xi2_inv(state: State, k: int, noise: DetectionNoise) -> float:
    return chi2_inv(noisy_moments(state, k, noise))[0] / _population(state)


def operating_point(n: float = OPERATING_POINT_N) -> CubicParams:
    """Optimal (r, s) at population n."""
    optimum = optimal_squeezing(n)
    return CubicParams(r=optimum.r_opt_abs, s=optimum.s_opt)


def loss_scan(n: float,
              gamma_grid: Sequence[float],
              dim: Optional[int] = None,
              steps: int = DEFAULT_STEPS,
              workers: int = 1,
              tolerance: float = TRUNCATION_TOLERANCE,
              max_dim: int = DEFAULT_MAX_DIM) -> SensitivityReportList:
    """
    F_Q/n and ξ⁻²₍₁..₄₎ of the optimal state at population n versus γt (t₁ = t₂ = 1).

    Points whose lossy state breaks the truncation tolerance are listed in the result's skipped.
    """
    params = operating_point(n)
    if dim is None:
        dim = cubic_phase_state(params.r, params.s, tolerance=tolerance, max_dim=max_dim).dim
    sets = {k: build_observable_set(k, dim) for k in range(1, 5)}
    n_op = make_ladder(dim).n

    def evaluate(gamma_t: float) -> SensitivityReport:
        rho = lossy_cubic_state(params, LossConfig(gamma=gamma_t, steps=steps), dim, tolerance)
        n_lossy = expectation(rho, n_op).real
        f_q = mixed_qfi(rho, n_op)
        xi = [chi2_inv(numeric_moments(rho, sets[k]))[0] / n_lossy for k in range(1, 5)]
        return SensitivityReport(n=n_lossy, r=params.r, s=params.s, f_q=f_q,
                                 f_q_over_n=f_q / n_lossy, xi2_inv=xi, gamma_t=gamma_t,
                                 protocol="loss", dim_used=dim,
                                 truncation_tail=rho.tail_mass)

    return GridHandler("NoiseModels::loss_scan", workers).map_reports(evaluate, gamma_grid)


def noise_scan(n: float,
               sigma_grid: Sequence[float],
               dim: Optional[int] = None,
               workers: int = 1,
               tolerance: float = TRUNCATION_TOLERANCE,
               max_dim: int = DEFAULT_MAX_DIM) -> SensitivityReportList:
    """ξ⁻²₍₁..₄₎ on the accessible sets versus σ; F_Q/n is unaffected by detection noise."""
    params = operating_point(n)
    state = cubic_phase_state(params.r, params.s, dim, tolerance, max_dim)
    n_op = make_ladder(state.dim).n
    population = expectation(state, n_op).real
    f_q = 4 * max(expectation(state, n_op @ n_op).real - population ** 2, 0.0)

    def evaluate(sigma: float) -> SensitivityReport:
        noise = DetectionNoise(sigma)
        xi = [noisy_xi2_inv(state, k, noise) for k in range(1, 5)]
        return SensitivityReport(n=population, r=params.r, s=params.s, f_q=f_q,
                                 f_q_over_n=f_q / population, xi2_inv=xi, sigma=sigma,
                                 protocol="detection_noise", dim_used=state.dim,
                                 truncation_tail=state.tail_mass)

    return GridHandler("NoiseModels::noise_scan", workers).map_reports(evaluate, sigma_grid)
