import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar
from scipy.special import factorial2

from .Errors import InfeasiblePopulationError, SolverError

C2 = 128 / 3
S_INF = 0.5 * math.log(math.sqrt(6) / 2)
R_COEFF = 4 / 9
FD_STEP_FIRST = 1e-6
FD_STEP_SECOND = 1e-4


@dataclass
class CubicParams():
    """
    Dataclass for the cubic phase state parameters.

    Attributes:
        r (float): Cubicity.
        s (float): Squeezing strength, s >= 0.
        n (Optional[float]): Mean photon number. Derived when omitted, checked when given.
    """
    r: float
    s: float
    n: Optional[float] = None

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("squeezing strength s must be non-negative")
        expected = population(self.r, self.s)
        if self.n is None:
            self.n = expected
        elif abs(self.n - expected) > 1e-12 * max(1.0, expected):
            raise ValueError(
                f"n={self.n} does not match population(r, s)={expected}")

    @staticmethod
    def from_population(n: float, s: float) -> 'CubicParams':
        return CubicParams(r=cubicity_for_population(n, s), s=s)


@dataclass
class OptimalPoint():
    """
    Dataclass for the population-constrained optimum of the QFI.

    Attributes:
        n (float): Population.
        s_opt (float): Optimal squeezing strength.
        r_opt_abs (float): |r| reaching population n at s_opt.
        f_q_max (float): QFI at the optimum.
        stationarity_residual (float): |∂F/∂s| at s_opt by central difference, relative to F.
        second_difference (float): Second central difference of F/n at s_opt (negative at a maximum).
        method (str): 'ferrari' for the closed-form root, 'bounded' for the 1-D fallback.
        candidate_roots (List[complex]): The four e^{2s} roots of the stationarity quartic.
    """
    n: float
    s_opt: float
    r_opt_abs: float
    f_q_max: float
    stationarity_residual: float
    second_difference: float = 0.0
    method: str = "ferrari"
    candidate_roots: List[complex] = field(default_factory=list)


def population(r: float, s: float) -> float:
    """Mean photon number sinh²(s) + (27/8)e^{4s}r²."""
    return math.sinh(s) ** 2 + 27 / 8 * math.exp(4 * s) * r ** 2


def population_second_moment(r: float, s: float) -> float:
    """<n²> of the cubic phase state; reduces to sinh²(s)(1+3cosh 2s)/2 at r = 0."""
    w = math.exp(2 * s)
    r2 = r * r
    return (12 - 16 * w + 8 * w ** 2 + 540 * w ** 5 * r2 + 8505 * w ** 6 * r2 ** 2
            + w ** 4 * (12 - 216 * r2) + 4 * w ** 3 * (-4 + 45 * r2)) / (64 * w ** 2)


def cubicity_for_population(n: float, s: float) -> float:
    """|r| such that population(r, s) = n."""
    floor = math.sinh(s) ** 2
    if n < floor:
        if floor - n > 1e-12 * max(1.0, n):
            raise InfeasiblePopulationError(n, floor)
        return 0.0
    return math.sqrt((n - floor) / (27 / 8 * math.exp(4 * s)))


def qfi_rs(r: float, s: float) -> float:
    """Phase QFI 486e^{8s}r⁴ + (9/2 e^{2s} + 27e^{6s})r² + cosh(4s) − 1."""
    return (486 * math.exp(8 * s) * r ** 4
            + (4.5 * math.exp(2 * s) + 27 * math.exp(6 * s)) * r ** 2
            + math.cosh(4 * s) - 1)


def _a(s: float) -> float:
    return 4 / 3 * math.exp(-2 * s) + 8 * math.exp(2 * s)


def qfi_ns_coefficients(s: float) -> Tuple[float, float, float]:
    """(c2, c1, c0) of F_Q(n, s) = c2 n² + c1 n + c0."""
    a = _a(s)
    sh2 = math.sinh(s) ** 2
    c1 = a - 2 * C2 * sh2
    c0 = (math.cosh(4 * s) - 1) - a * sh2 + C2 * sh2 ** 2
    return C2, c1, c0


def qfi_ns(n: float, s: float) -> float:
    floor = math.sinh(s) ** 2
    if n < floor and floor - n > 1e-12 * max(1.0, n):
        raise InfeasiblePopulationError(n, floor)
    c2, c1, c0 = qfi_ns_coefficients(s)
    return c2 * n ** 2 + c1 * n + c0


def qfi_ns_derivative(n: float, s: float) -> float:
    """Analytic ∂F_Q(n, s)/∂s at fixed n."""
    z = math.exp(2 * s)
    u = n - math.sinh(s) ** 2
    sh2s = math.sinh(2 * s)
    a_prime = -8 / (3 * z) + 16 * z
    return -2 * C2 * u * sh2s + a_prime * u - _a(s) * sh2s + 4 * math.sinh(4 * s)


def squeezed_vacuum_qfi(n: float) -> float:
    return 8 * n * (n + 1)


def squeezing_db(s: float) -> float:
    return 10 * math.log10(math.exp(2 * s))


def _stationarity_quartic(n: float) -> np.ndarray:
    """Coefficients (ascending) of 14z⁴ − 40Az³ + 60Az − 34 with z = e^{2s}, A = 1 + 2n."""
    A = 1 + 2 * n
    return np.array([-34.0, 60 * A, 0.0, -40 * A, 14.0])


def _resolvent_root(n: float, p: float, q: float, l: float) -> complex:
    """
    A root of 2m³ − pm² − 2lm + (pl − q²/4) = 0 from the closed-form Cardano combination.

    Falls back to numpy.roots when the closed form does not satisfy the cubic.
    """
    Q = (-54781 - 24301800 * n - 553231800 * n ** 2 - 4513860000 * n ** 3
         - 10896930000 * n ** 4 - 10368000000 * n ** 5 - 3456000000 * n ** 6)
    S = -1125 - 4500 * n - 4500 * n ** 2 + math.sqrt(3) * cmath.sqrt(Q)
    cube_root = S ** (1 / 3) if S != 0 else 0j
    m1 = -25 / 49 * (1 + 4 * n + 4 * n ** 2)
    m = complex(m1)
    if cube_root != 0:
        m2 = -7 * (-372 / 49 - 7200 * n / 49 - 7200 * n ** 2 / 49) / 6 ** (4 / 3) / cube_root
        m3 = cube_root / (7 * 6 ** (2 / 3))
        m = m1 + m2 + m3
    coefficients = [2.0, -p, -2 * l, p * l - q * q / 4]
    scale = max(abs(c) for c in coefficients) * max(1.0, abs(m)) ** 3
    if abs(np.polyval(coefficients, m)) <= 1e-9 * scale and abs(2 * m - p) > 0:
        return m
    logging.debug(f"AnalyticMetrology::_resolvent_root::numpy_fallback::{n}")
    roots = np.roots(coefficients)
    return complex(max(roots, key=lambda root: (2 * root - p).real))


def ferrari_roots(n: float) -> List[complex]:
    """The four e^{2s} roots of the stationarity quartic, by Ferrari's method."""
    A = 1 + 2 * n
    p = -150 / 49 * A ** 2
    q = -1000 / 343 * A ** 3 + 30 / 7 * A
    l = -1875 / 2401 * A ** 4 + 150 / 49 * A ** 2 - 17 / 7
    m = _resolvent_root(n, p, q, l)
    C = cmath.sqrt(2 * m - p)
    D = -q / (2 * C)
    roots = []
    for sign in (-1, 1):
        # y² + sign·C·y + (m + sign·D) = 0
        b = sign * C
        c = m + sign * D
        disc = cmath.sqrt(b * b - 4 * c)
        roots.extend([(-b + disc) / 2, (-b - disc) / 2])
    shift = 5 * A / 7
    return [_polish(y + shift, n) for y in roots]


def _polish(z: complex, n: float, iterations: int = 3) -> complex:
    coefficients = _stationarity_quartic(n)
    derivative = P.polyder(coefficients)
    for _ in range(iterations):
        slope = P.polyval(z, derivative)
        if slope == 0:
            break
        z = z - P.polyval(z, coefficients) / slope
    return complex(z)


def _second_difference(n: float, s: float, h: float = FD_STEP_SECOND) -> float:
    lower = max(s - h, 0.0)
    return (qfi_ns(n, s + h) - 2 * qfi_ns(n, s) + qfi_ns(n, lower)) / (h * h * n)


def _stationarity_residual(n: float, s: float, f_q: float, h: float = FD_STEP_FIRST) -> float:
    if s - h < 0:
        return abs(qfi_ns_derivative(n, s)) / f_q
    return abs((qfi_ns(n, s + h) - qfi_ns(n, s - h)) / (2 * h)) / f_q


def _max_feasible_s(n: float) -> float:
    return math.asinh(math.sqrt(n))


def optimal_squeezing(n: float) -> OptimalPoint:
    """
    Squeezing strength maximizing F_Q(n, s) at fixed population n.

    The four roots of the stationarity quartic are computed with Ferrari's method; roots with
    e^{2s} <= 1, a non-negligible imaginary part or an infeasible population are discarded and the
    remaining root maximizing F_Q is kept. If that root fails the stationarity or curvature check,
    a bounded 1-D maximization takes over and the result is flagged method='bounded'.

    Raises:
        SolverError: no root passes the admissibility filter.
    """
    if n <= 0:
        raise ValueError("population n must be positive")
    logging.debug(f"AnalyticMetrology::optimal_squeezing::{n}")
    roots = ferrari_roots(n)
    s_max = _max_feasible_s(n)
    admissible = []
    for z in roots:
        if abs(z.imag) >= 1e-9 or z.real <= 1:
            continue
        s = 0.5 * math.log(z.real)
        if s > s_max:
            continue
        admissible.append(s)
    if not admissible:
        raise SolverError(f"no admissible stationary point for n={n}", roots)
    s_opt = max(admissible, key=lambda s: qfi_ns(n, s))
    f_q = qfi_ns(n, s_opt)
    residual = _stationarity_residual(n, s_opt, f_q)
    curvature = _second_difference(n, s_opt)
    method = "ferrari"
    if residual >= 1e-6 or curvature >= 0:
        logging.warning(
            f"AnalyticMetrology::optimal_squeezing::fallback::{n}::{residual:.3e}")
        result = minimize_scalar(lambda s: -qfi_ns(n, s), bounds=(0.0, min(s_max, 1.0)),
                                 method="bounded", options={"xatol": 1e-12})
        s_opt = float(result.x)
        f_q = qfi_ns(n, s_opt)
        residual = _stationarity_residual(n, s_opt, f_q)
        curvature = _second_difference(n, s_opt)
        method = "bounded"
    return OptimalPoint(n=n,
                        s_opt=s_opt,
                        r_opt_abs=cubicity_for_population(n, s_opt),
                        f_q_max=f_q,
                        stationarity_residual=residual,
                        second_difference=curvature,
                        method=method,
                        candidate_roots=roots)


def asymptotic_optimal() -> Tuple[float, float]:
    """Large-n limits: s_opt → (1/2)log(√6/2) and r_opt → (4/9)√n."""
    return S_INF, R_COEFF


def displacement_qfi(r: float, s: float) -> float:
    """
    Displacement QFI optimized over the displacement direction: 4 × largest quadrature variance.

    For the cubic state Var x = e^{2s}/2, Var p = e^{-2s}/2 + (9/2)r²e^{4s} and Cov(x, p) = 0.
    """
    if s < 0:
        raise ValueError("squeezing strength s must be non-negative")
    w = math.exp(2 * s)
    covariance = np.array([[w / 2, 0.0], [0.0, 1 / (2 * w) + 4.5 * r ** 2 * w ** 2]])
    return float(4 * np.linalg.eigvalsh(covariance)[-1])


def squeezed_vacuum_displacement_qfi(n: float) -> float:
    return 2 * (math.sqrt(n) + math.sqrt(n + 1)) ** 2


def cramer_rao_bound(f_q: float, mu: int) -> float:
    """Phase uncertainty 1/√(μ F_Q) after μ repetitions."""
    if f_q <= 0:
        raise ValueError("f_q must be positive")
    if mu < 1:
        raise ValueError("mu must be a positive integer")
    return 1 / math.sqrt(mu * f_q)


class GaussianPolynomialState():
    """
    Exact moments of a wave function Q(x)·e^{iΦ(x)}·(πw)^{-1/4}e^{-x²/(2w)}, w = e^{2s}.

    Q is a complex polynomial and Φ' a real polynomial, both given as ascending coefficient
    sequences. Position multiplies Q; momentum maps Q to −i(Q' + iΦ'Q − xQ/w). Expectation
    values reduce to Gaussian moments ∫x^{2m}g² = (w/2)^m (2m−1)!!.

    Methods:
        norm2(): ∫|ψ|² (the normalization constant of an unnormalized state).
        mean_photon_number(): <n> of the normalized state.
        photon_number_second_moment(): <n²> of the normalized state.
        moments(): (norm2, <n>, <n²>).
    """

    def __init__(self,
                 s: float,
                 polynomial: Sequence[complex] = (1.0,),
                 phase_derivative: Sequence[float] = (0.0,)):
        self.w = math.exp(2 * s)
        self.polynomial = np.asarray(polynomial, dtype=complex)
        self.phase_derivative = np.asarray(phase_derivative, dtype=complex)

    def _x(self, q: np.ndarray) -> np.ndarray:
        return P.polymulx(q)

    def _p(self, q: np.ndarray) -> np.ndarray:
        derivative = P.polyder(q) if q.size > 1 else np.zeros(1, dtype=complex)
        inner = P.polyadd(derivative, 1j * P.polymul(self.phase_derivative, q))
        inner = P.polysub(inner, P.polymulx(q) / self.w)
        return -1j * inner

    def _number(self, q: np.ndarray) -> np.ndarray:
        total = P.polyadd(self._x(self._x(q)), self._p(self._p(q)))
        return P.polysub(total, q) / 2

    def _gaussian_moment(self, k: int) -> float:
        if k % 2:
            return 0.0
        m = k // 2
        return (self.w / 2) ** m * float(factorial2(2 * m - 1, exact=True)) if m else 1.0

    def _inner(self, q1: np.ndarray, q2: np.ndarray) -> complex:
        product = P.polymul(np.conj(q1), q2)
        return complex(sum(c * self._gaussian_moment(k) for k, c in enumerate(product)))

    def norm2(self) -> float:
        return self._inner(self.polynomial, self.polynomial).real

    def mean_photon_number(self) -> float:
        return self.moments()[1]

    def photon_number_second_moment(self) -> float:
        return self.moments()[2]

    def moments(self) -> Tuple[float, float, float]:
        z = self.norm2()
        number = self._number(self.polynomial)
        mean_n = self._inner(self.polynomial, number).real / z
        mean_n2 = self._inner(number, number).real / z
        return z, mean_n, mean_n2
