import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg import expm
from scipy.special import comb, factorial2

from .AnalyticMetrology import GaussianPolynomialState, population, qfi_rs
from .Errors import ContractError, ConvergenceError, UnsupportedAnalyticOrderError
from .FockCore import (TRUNCATION_TOLERANCE, DEFAULT_MAX_DIM, FockState, OperatorMatrix,
                       apply_gate, check_truncation, expectation, make_ladder, pure_qfi,
                       squeezed_vacuum, with_auto_dim, _cube_cached)
from .GridHandler import GridHandler
from .Report import SensitivityReport, SensitivityReportList

MAX_ANALYTIC_ITERATIONS = 5
ENVELOPE_BINS = 200
ENVELOPE_RANGE = (0.01, 20.0)
TRISQUEEZE_DIM = 90
TRISQUEEZE_TOLERANCE = 1e-4
PROTOCOLS = ("ideal", "rus", "kerr", "kerr_plain", "trisqueeze", "squeezed_vacuum")


@dataclass
class RusParams():
    """
    Dataclass for the repeat-until-success approximation (1 + i(r/N)x³)^N of the cubic gate.

    Attributes:
        r (float): Target cubicity.
        s (float): Squeezing of the seed state.
        n_iter (int): Number of iterations N.
    """
    r: float
    s: float
    n_iter: int = 1

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be a positive integer")
        if self.s < 0:
            raise ValueError("squeezing strength s must be non-negative")


@dataclass
class KerrParams():
    """
    Dataclass for the Kerr gate sandwiched between squeezing S(log λ) and displacement D(α).

    Attributes:
        r (float): Target cubicity.
        s (float): Squeezing of the seed state.
        lam (float): Quadrature gain λ > 1.
        alpha (float): Real displacement amplitude.
        kerr_k (float, optional): Kerr strength K. By default K = √2 r/(αλ³), which makes the
            duration τ = 1; only the product Kτ enters the gate.

    Detuning Δ, drive β and duration τ are derived on access.
    """
    r: float
    s: float
    lam: float
    alpha: float
    kerr_k: Optional[float] = None

    def __post_init__(self):
        if self.lam <= 1:
            raise ValueError("lam must be greater than 1")
        if self.kerr_k is None:
            if self.r == 0 or self.alpha == 0:
                raise ValueError("r and alpha must be nonzero to derive kerr_k from τ = 1")
            self.kerr_k = math.sqrt(2) * self.r / (self.alpha * self.lam ** 3)
        if self.alpha == 0 or self.kerr_k == 0:
            raise ValueError("alpha and kerr_k must be nonzero")
        if self.s < 0:
            raise ValueError("squeezing strength s must be non-negative")

    @property
    def delta(self) -> float:
        return 3 * self.kerr_k * self.alpha ** 2 - self.kerr_k

    @property
    def beta(self) -> float:
        return -2 * self.kerr_k * self.alpha ** 3

    @property
    def tau(self) -> float:
        return math.sqrt(2) * self.r / (self.kerr_k * self.alpha * self.lam ** 3)

    @property
    def quartic_prefactor(self) -> float:
        """Relative weight λ/(4√2 α) of the x⁴ residue next to x³."""
        return self.lam / (4 * math.sqrt(2) * self.alpha)

    @staticmethod
    def on_scan_line(r: float, s: float, lam: float,
                     kerr_k: Optional[float] = None) -> 'KerrParams':
        """α = λ³."""
        return KerrParams(r=r, s=s, lam=lam, alpha=lam ** 3, kerr_k=kerr_k)


@dataclass
class TrisqueezeParams():
    """exp[i(t*a³ + t a†³)] on the vacuum, checked at dim and 2·dim."""
    t: complex
    dim: int = TRISQUEEZE_DIM

    def __post_init__(self):
        if self.dim < 4:
            raise ValueError("dim must be at least 4")


# Repeat-until-success

def rus_amplitudes(p: RusParams, dim: int,
                   tolerance: float = TRUNCATION_TOLERANCE) -> Tuple[np.ndarray, float]:
    """Unnormalized (1 + i(r/N)x³)^N applied to the squeezed vacuum, and its squared norm Z_N."""
    seed = squeezed_vacuum(p.s, dim, tolerance)
    cube = _cube_cached(dim).matrix
    epsilon = p.r / p.n_iter
    amplitudes = seed.amplitudes.copy()
    for _ in range(p.n_iter):
        amplitudes = amplitudes + 1j * epsilon * (cube @ amplitudes)
    return amplitudes, float(np.vdot(amplitudes, amplitudes).real)


def rus_state_numeric(p: RusParams,
                      dim: Optional[int] = None,
                      tolerance: float = TRUNCATION_TOLERANCE,
                      max_dim: int = DEFAULT_MAX_DIM) -> FockState:
    def build(d: int) -> FockState:
        logging.debug(f"PrepProtocols::rus_state_numeric::{p.n_iter}::{p.r}::{p.s}::{d}")
        amplitudes, z = rus_amplitudes(p, d, tolerance)
        return check_truncation(FockState(amplitudes / math.sqrt(z)), tolerance)

    return with_auto_dim(build, dim, max_dim)


def rus_normalization_coefficients(n_iter: int) -> List[Fraction]:
    """
    Exact coefficients c_k of Z_N = Σ_k c_k e^{6ks} r^{2k}.

    c_k = C(N,k)(6k−1)!!/(N^{2k} 2^{3k}), from <x^{6k}> = (6k−1)!!(e^{2s}/2)^{3k}.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be a positive integer")
    coefficients = [Fraction(1)]
    for k in range(1, n_iter + 1):
        coefficients.append(Fraction(comb(n_iter, k, exact=True) * factorial2(6 * k - 1, exact=True),
                                     n_iter ** (2 * k) * 2 ** (3 * k)))
    return coefficients


def rus_normalization(p: RusParams) -> float:
    return float(sum(float(c) * math.exp(6 * k * p.s) * p.r ** (2 * k)
                     for k, c in enumerate(rus_normalization_coefficients(p.n_iter))))


def rus_polynomial(p: RusParams) -> np.ndarray:
    """Ascending coefficients of (1 + i(r/N)x³)^N."""
    factor = np.array([1.0, 0.0, 0.0, 1j * p.r / p.n_iter])
    return P.polypow(factor, p.n_iter)


def rus_analytic(p: RusParams) -> Tuple[float, float, float, float]:
    """
    (Z_N, <n>, <n²>, F_Q) from exact Gaussian moments.

    Raises:
        UnsupportedAnalyticOrderError: N outside 1..5.
    """
    if not 1 <= p.n_iter <= MAX_ANALYTIC_ITERATIONS:
        raise UnsupportedAnalyticOrderError(p.n_iter)
    z, mean_n, mean_n2 = GaussianPolynomialState(p.s, rus_polynomial(p)).moments()
    return z, mean_n, mean_n2, max(4 * (mean_n2 - mean_n ** 2), 0.0)


# Kerr protocols

def _squeeze_generator(dim: int) -> OperatorMatrix:
    """G = i(a†² − a²)/2, so that exp(−iξG) = exp[ξ(a†² − a²)/2] stretches x by e^ξ."""
    a = make_ladder(dim).a.matrix
    a2 = a @ a
    return OperatorMatrix(0.5j * (a2.conj().T - a2), True)


def kerr_hamiltonian(p: KerrParams, dim: int) -> OperatorMatrix:
    """Lab-frame H = −(K/2)a†²a² + Δa†a + β(a + a†)."""
    ladder = make_ladder(dim)
    a, n = ladder.a.matrix, ladder.n.matrix
    a2 = a @ a
    h = (-p.kerr_k / 2 * (a2.conj().T @ a2) + p.delta * n
         + p.beta * (a + a.conj().T))
    return OperatorMatrix(h, True)


def kerr_effective_hamiltonian(p: KerrParams, dim: int) -> OperatorMatrix:
    """
    S†D† H D S expressed through b = c + α with c = (λx + ip/λ)/√2, minus its c-number part.

    With Δ = 3Kα² − K and β = −2Kα³ the leading term is −(Kλ³α/√2)x³.
    """
    ladder = make_ladder(dim)
    x, p_op = ladder.x.matrix, ladder.p.matrix
    c = (p.lam * x + 1j * p_op / p.lam) / math.sqrt(2)
    b = c + p.alpha * np.eye(dim)
    b_dagger = b.conj().T
    h = (-p.kerr_k / 2 * (b_dagger @ b_dagger @ b @ b) + p.delta * (b_dagger @ b)
         + p.beta * (b + b_dagger))
    constant = -p.kerr_k / 2 * p.alpha ** 4 + p.delta * p.alpha ** 2 + 2 * p.beta * p.alpha
    h = h - constant * np.eye(dim)
    return OperatorMatrix((h + h.conj().T) / 2, True)


def kerr_effective_state(p: KerrParams,
                         dim: Optional[int] = None,
                         tolerance: float = TRUNCATION_TOLERANCE,
                         max_dim: int = DEFAULT_MAX_DIM) -> FockState:
    """exp(−iτH_eff) on the squeezed vacuum, evaluated in the frame conjugated by D(α)S(log λ)."""
    def build(d: int) -> FockState:
        logging.debug(f"PrepProtocols::kerr_effective_state::{p.lam}::{p.alpha}::{d}")
        seed = squeezed_vacuum(p.s, d, tolerance)
        return apply_gate(seed, kerr_effective_hamiltonian(p, d), -p.tau, tolerance)

    return with_auto_dim(build, dim, max_dim)


def kerr_lab_frame_state(p: KerrParams, dim: int,
                         tolerance: float = TRUNCATION_TOLERANCE) -> FockState:
    """
    S†(log λ)D†(α)exp(−iτH)D(α)S(log λ) applied literally in the lab-frame basis.

    The displaced intermediate state holds about α² photons, so only small α fit in dim.
    """
    logging.debug(f"PrepProtocols::kerr_lab_frame_state::{p.lam}::{p.alpha}::{dim}")
    ladder = make_ladder(dim)
    squeeze = _squeeze_generator(dim)
    xi = math.log(p.lam)
    # D(α) = exp(α(a† − a)) = exp(−i√2 α p)
    state = squeezed_vacuum(p.s, dim, tolerance)
    state = apply_gate(state, squeeze, -xi, tolerance)
    state = apply_gate(state, ladder.p, -math.sqrt(2) * p.alpha, tolerance)
    state = apply_gate(state, kerr_hamiltonian(p, dim), -p.tau, tolerance)
    state = apply_gate(state, ladder.p, math.sqrt(2) * p.alpha, tolerance)
    return apply_gate(state, squeeze, xi, tolerance)


def kerr_plain_hamiltonian(delta: float, s: float, kerr_k: float, dim: int) -> OperatorMatrix:
    """H = Δa†a + s(a†² + a²) − K a†²a²."""
    ladder = make_ladder(dim)
    a = ladder.a.matrix
    a2 = a @ a
    a2_dagger = a2.conj().T
    return OperatorMatrix(delta * ladder.n.matrix + s * (a2_dagger + a2)
                          - kerr_k * (a2_dagger @ a2), True)


def kerr_plain_state(delta: float, s: float, kerr_k: float, t: float = 1.0,
                     dim: Optional[int] = None,
                     tolerance: float = TRUNCATION_TOLERANCE,
                     max_dim: int = DEFAULT_MAX_DIM) -> FockState:
    def build(d: int) -> FockState:
        vacuum = FockState.basis(0, d)
        return apply_gate(vacuum, kerr_plain_hamiltonian(delta, s, kerr_k, d), -t, tolerance)

    return with_auto_dim(build, dim, max_dim)


def kerr_commutator_norm(kerr_k: float, dim: int) -> float:
    """‖[exp(iK a†²a²), n]‖ in the truncated basis."""
    ladder = make_ladder(dim)
    a2 = ladder.a.matrix @ ladder.a.matrix
    eigenvalues, eigenvectors = OperatorMatrix(a2.conj().T @ a2, True).spectrum
    unitary = OperatorMatrix(
        (eigenvectors * np.exp(1j * kerr_k * eigenvalues)) @ eigenvectors.conj().T)
    return float(np.linalg.norm(unitary.commutator(ladder.n).matrix, 2))


# Trisqueezing

def _trisqueeze_generator(t: complex, dim: int) -> OperatorMatrix:
    a = make_ladder(dim).a.matrix
    a3 = a @ a @ a
    return OperatorMatrix(np.conj(t) * a3 + t * a3.conj().T, True)


def _trisqueeze_at(t: complex, dim: int) -> FockState:
    vacuum = FockState.basis(0, dim)
    # the truncated chain is unitary at any dim; convergence is judged across dims
    return apply_gate(vacuum, _trisqueeze_generator(t, dim), 1.0, tolerance=math.inf)


def trisqueezed_state(p: TrisqueezeParams,
                      tolerance: float = TRISQUEEZE_TOLERANCE) -> FockState:
    """
    exp[i(t*a³ + t a†³)]|0> at dim, accepted when <n> agrees with the 2·dim result.

    Raises:
        ConvergenceError: relative change of <n> above tolerance, with both values attached.
    """
    logging.debug(f"PrepProtocols::trisqueezed_state::{p.t}::{p.dim}")
    state = _trisqueeze_at(p.t, p.dim)
    check = _trisqueeze_at(p.t, 2 * p.dim)
    n_small = expectation(state, make_ladder(p.dim).n).real
    n_large = expectation(check, make_ladder(2 * p.dim).n).real
    if abs(n_large - n_small) > tolerance * max(abs(n_large), 1e-300) and n_large > 0:
        raise ConvergenceError(
            f"trisqueezed population not converged at t={p.t}: {n_small} vs {n_large}",
            [n_small, n_large])
    return state


def trisqueeze_chain_population(t: float, levels: int = TRISQUEEZE_DIM // 3) -> float:
    """
    <n> of exp[it(a³ + a†³)]|0> by scipy's expm on the chain |0>, |3>, ..., |3(levels−1)>.

    The vacuum only couples to multiples of three, so this matches the full truncation at
    dim = 3·levels without an eigendecomposition.
    """
    # G|3k> = √((3k+1)(3k+2)(3k+3))|3k+3> + √(3k(3k−1)(3k−2))|3k−3>
    up = np.array([math.sqrt((3 * k + 1) * (3 * k + 2) * (3 * k + 3)) for k in range(levels - 1)])
    chain = np.diag(up, -1) + np.diag(up, 1)
    weights = np.abs(expm(1j * t * chain)[:, 0]) ** 2
    return float(weights @ (3.0 * np.arange(levels)) / np.sum(weights))


def trisqueeze_small_t_population(t: float) -> float:
    """Leading terms 18t² + 324t⁴ of the trisqueezed population."""
    return 18 * t ** 2 + 324 * t ** 4


def trisqueeze_population_scan(t_values: Sequence[float],
                               dims: Sequence[int],
                               tolerance: float = TRISQUEEZE_TOLERANCE) -> SensitivityReportList:
    """
    <n> and F_Q of exp[i t(a³ + a†³)]|0> for every (dim, t), one eigendecomposition per dim.

    Rows carry converged = True when the value agrees with the next larger dim within tolerance.
    """
    dims = sorted(dims)
    if not dims or len(t_values) == 0:
        raise ValueError("t_values and dims must not be empty")
    table = {}
    for dim in dims:
        eigenvalues, eigenvectors = _trisqueeze_generator(1.0, dim).spectrum
        n_diag = np.arange(dim, dtype=float)
        overlap = eigenvectors.conj().T[:, 0]
        for t in t_values:
            amplitudes = eigenvectors @ (np.exp(1j * t * eigenvalues) * overlap)
            weights = np.abs(amplitudes) ** 2
            mean_n = float(weights @ n_diag)
            f_q = max(4 * (float(weights @ n_diag ** 2) - mean_n ** 2), 0.0)
            table[(dim, t)] = (mean_n, f_q, float(np.sum(weights[-5:])))
    reports = SensitivityReportList()
    for i, dim in enumerate(dims):
        for t in t_values:
            mean_n, f_q, tail = table[(dim, t)]
            converged = False
            if i + 1 < len(dims):
                reference = table[(dims[i + 1], t)][0]
                converged = abs(reference - mean_n) <= tolerance * max(abs(reference), 1e-300)
            reports.append(SensitivityReport(
                n=mean_n, r=float(t), s=0.0, f_q=f_q,
                f_q_over_n=f_q / mean_n if mean_n > 0 else math.nan,
                protocol="trisqueeze", dim_used=dim, truncation_tail=tail,
                extras={"t": float(t), "converged": converged}))
    reports.rebuild_cache()
    return reports


# Scans

def _pure_report(state: FockState, protocol: str, r: float, s: float, **extras) -> SensitivityReport:
    n_op = make_ladder(state.dim).n
    n = expectation(state, n_op).real
    f_q = pure_qfi(state, n_op)
    return SensitivityReport(n=n, r=r, s=s, f_q=f_q, f_q_over_n=f_q / n if n > 0 else math.nan,
                             protocol=protocol, dim_used=state.dim,
                             truncation_tail=state.tail_mass, extras=dict(extras))


def protocol_scan(protocol: str,
                  r_values: Sequence[float] = (),
                  s_values: Sequence[float] = (),
                  n_iter: int = 1,
                  lambdas: Sequence[float] = (2.0, 3.0, 4.0, 5.0),
                  kerr_k: Optional[float] = None,
                  deltas: Sequence[float] = (),
                  kerr_values: Sequence[float] = (),
                  t_values: Sequence[float] = (),
                  trisqueeze_dim: int = TRISQUEEZE_DIM,
                  max_dim: int = DEFAULT_MAX_DIM,
                  workers: int = 1) -> SensitivityReportList:
    """
    Sensitivity F_Q/n of one preparation scheme over its parameter grid.

    Points whose states do not fit max_dim (or trisqueezing points that do not converge) are
    skipped with a warning.
    """
    if protocol not in PROTOCOLS:
        raise ContractError(f"unknown protocol {protocol}; expected one of {PROTOCOLS}")
    logging.debug(f"PrepProtocols::protocol_scan::{protocol}")

    if protocol == "ideal":
        points = list(product(r_values, s_values))

        def evaluate(point):
            r, s = point
            n = population(r, s)
            f_q = qfi_rs(r, s)
            return SensitivityReport(n=n, r=r, s=s, f_q=f_q,
                                     f_q_over_n=f_q / n if n > 0 else math.nan,
                                     protocol="ideal")
    elif protocol == "squeezed_vacuum":
        points = list(s_values)

        def evaluate(s):
            n = math.sinh(s) ** 2
            f_q = math.cosh(4 * s) - 1
            return SensitivityReport(n=n, r=0.0, s=s, f_q=f_q,
                                     f_q_over_n=f_q / n if n > 0 else math.nan,
                                     protocol="squeezed_vacuum")
    elif protocol == "rus":
        points = list(product(r_values, s_values))

        def evaluate(point):
            r, s = point
            params = RusParams(r=r, s=s, n_iter=n_iter)
            if n_iter <= MAX_ANALYTIC_ITERATIONS:
                _, n, _, f_q = rus_analytic(params)
                return SensitivityReport(n=n, r=r, s=s, f_q=f_q,
                                         f_q_over_n=f_q / n if n > 0 else math.nan,
                                         protocol=f"rus{n_iter}", extras={"n_iter": n_iter})
            return _pure_report(rus_state_numeric(params, max_dim=max_dim), f"rus{n_iter}",
                                r, s, n_iter=n_iter)
    elif protocol == "kerr":
        points = list(product(lambdas, r_values, s_values))

        def evaluate(point):
            lam, r, s = point
            params = KerrParams.on_scan_line(r, s, lam, kerr_k)
            return _pure_report(kerr_effective_state(params, max_dim=max_dim), "kerr", r, s,
                                lam=lam, alpha=params.alpha)
    elif protocol == "kerr_plain":
        points = list(product(deltas, s_values, kerr_values))

        def evaluate(point):
            delta, s, k = point
            return _pure_report(kerr_plain_state(delta, s, k, max_dim=max_dim), "kerr_plain",
                                0.0, s, delta=delta, kerr_k=k)
    else:
        points = list(t_values)

        def evaluate(t):
            state = trisqueezed_state(TrisqueezeParams(t=t, dim=trisqueeze_dim))
            return _pure_report(state, "trisqueeze", 0.0, 0.0, t=t)

    handler = GridHandler(f"PrepProtocols::protocol_scan::{protocol}", workers)
    return handler.map_reports(evaluate, points)


def envelope(reports: Sequence[SensitivityReport],
             bins: int = ENVELOPE_BINS,
             n_range: Tuple[float, float] = ENVELOPE_RANGE) -> SensitivityReportList:
    """Row of maximum F_Q/n in each logarithmic n-bin; empty bins are omitted."""
    if bins < 1:
        raise ValueError("bins must be a positive integer")
    edges = np.geomspace(n_range[0], n_range[1], bins + 1)
    best = {}
    for report in reports:
        if not math.isfinite(report.f_q_over_n) or not n_range[0] <= report.n <= n_range[1]:
            continue
        index = min(int(np.searchsorted(edges, report.n, side="right")) - 1, bins - 1)
        if index not in best or report.f_q_over_n > best[index].f_q_over_n:
            best[index] = report
    return SensitivityReportList([best[index] for index in sorted(best)])
