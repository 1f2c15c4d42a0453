import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from . import AnalyticMetrology as am
from .Errors import ConvergenceError, CubicMetrologyError
from .FockCore import (TRUNCATION_TOLERANCE, cubic_phase_state, expectation, make_ladder,
                       number_moments, pure_qfi, symmetrized)
from .MomentMethod import MONOMIALS, xi2_inv, xi2_inv_state
from .NoiseModels import loss_scan, noise_scan
from .PrepProtocols import (KerrParams, RusParams, envelope, kerr_commutator_norm,
                            kerr_effective_state, protocol_scan, rus_amplitudes, rus_analytic,
                            rus_state_numeric, trisqueeze_population_scan,
                            trisqueeze_chain_population, trisqueeze_small_t_population,
                            trisqueezed_state, TrisqueezeParams)
from .Utils import FileHelper, ListHelper

STRICT_TOLERANCE = 1e-12
# the (0.3, 0.5) corner of the QFI oracle grid converges at dim 2048
ORACLE_MAX_DIM = 2048
# fourth-order ratio of the exact noisy-moment model at the A9 point; the third-order target
# 0.356 is reproduced by the same model
NOISY_FOURTH_ORDER_RATIO = 0.350


@dataclass
class CriterionResult():
    """
    One acceptance criterion: what was measured against which target.

    Attributes:
        criterion (str): Identifier A1..A15.
        measured (float): Measured value (an error norm, ratio or limit).
        target (float): Target value.
        tolerance (float): Accepted deviation.
        passed (bool): Outcome.
        detail (str): Description, or the error that prevented the measurement.
    """
    criterion: str
    measured: float
    target: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class VerifySettings():
    max_dim: int = ORACLE_MAX_DIM
    tolerance: float = TRUNCATION_TOLERANCE
    seed: int = 0


def _within(criterion: str, measured: float, target: float, tolerance: float,
            detail: str) -> CriterionResult:
    return CriterionResult(criterion, measured, target, tolerance,
                           bool(abs(measured - target) <= tolerance), detail)


def _at_most(criterion: str, measured: float, bound: float, detail: str) -> CriterionResult:
    return CriterionResult(criterion, measured, bound, 0.0, bool(measured <= bound), detail)


def check_squeezed_vacuum_qfi(settings: VerifySettings) -> CriterionResult:
    errors = []
    for s in np.arange(1, 11) / 10:
        n = math.sinh(s) ** 2
        errors.append(max(abs(am.qfi_rs(0.0, s) - (math.cosh(4 * s) - 1)),
                          abs(am.qfi_rs(0.0, s) - am.squeezed_vacuum_qfi(n)) / 100))
    return _at_most("A1", max(errors), 1e-12, "qfi_rs(0,s) vs cosh4s−1 and 8n(n+1)")


def check_asymptotic_scaling(settings: VerifySettings) -> CriterionResult:
    n = 1e3
    optimum = am.optimal_squeezing(n)
    ratio = am.qfi_ns(n, optimum.s_opt) / n ** 2
    target = 128 / 3
    return _within("A2", ratio, target, 5e-3 * target, "F_Q/n² at n=1e3")


def check_optimal_parameters(settings: VerifySettings) -> CriterionResult:
    optimum = am.optimal_squeezing(1e4)
    r_ratio = optimum.r_opt_abs / (4 * 100 / 9)
    worst = max(am.optimal_squeezing(n).s_opt for n in ListHelper.geomspace(0.01, 1e4, 30))
    passed = (abs(optimum.s_opt - 0.101366) <= 1e-3 and abs(r_ratio - 1) <= 1e-2
              and worst <= 0.101366 + 1e-9)
    return CriterionResult("A3", optimum.s_opt, 0.101366, 1e-3, passed,
                           f"r_opt/(4√n/9)={r_ratio:.6f}, max s_opt={worst:.9f}")


def check_qfi_oracle(settings: VerifySettings) -> CriterionResult:
    worst = 0.0
    for r in ListHelper.linspace(0.0, 0.3, 7):
        for s in ListHelper.linspace(0.0, 0.5, 6):
            state = cubic_phase_state(r, s, tolerance=settings.tolerance, max_dim=settings.max_dim)
            mean_n, mean_n2 = number_moments(state)
            f_q = am.qfi_rs(r, s)
            worst = max(worst, abs(f_q - 4 * (mean_n2 - mean_n ** 2)) / (1 + f_q))
    return _at_most("A4", worst, 1e-6, "|qfi_rs − 4Var(n)|/(1+qfi_rs) on 7×6 grid")


def _random_points(seed: int, count: int = 20):
    rng = np.random.default_rng(seed)
    return list(zip(rng.uniform(0.01, 0.1, count), rng.uniform(0.0, 0.3, count)))


def check_saturation(settings: VerifySettings) -> CriterionResult:
    worst = 0.0
    for r, s in _random_points(settings.seed):
        ratio = am.qfi_rs(r, s) / am.population(r, s)
        worst = max(worst, abs(xi2_inv(r, s, 4) - ratio) / ratio)
        state = cubic_phase_state(r, s, tolerance=min(settings.tolerance, STRICT_TOLERANCE),
                                  max_dim=settings.max_dim)
        n_op = make_ladder(state.dim).n
        numeric_ratio = pure_qfi(state, n_op) / expectation(state, n_op).real
        worst = max(worst, abs(xi2_inv_state(state, 4) - numeric_ratio) / numeric_ratio)
    return _at_most("A5", worst, 1e-8, "ξ⁻²₍₄₎ vs F_Q/n, analytic and numeric")


def check_hierarchy(settings: VerifySettings) -> CriterionResult:
    worst = -math.inf
    for r in ListHelper.linspace(0.01, 0.5, 8):
        for s in ListHelper.linspace(0.0, 0.6, 7):
            values = [xi2_inv(r, s, k) for k in range(1, 5)]
            worst = max(worst, max(a - b for a, b in zip(values, values[1:])))
    return _at_most("A6", worst, 1e-9, "max ξ⁻²₍ₖ₎ − ξ⁻²₍ₖ₊₁₎")


def check_third_order(settings: VerifySettings) -> CriterionResult:
    n = 1e3
    optimum = am.optimal_squeezing(n)
    value = xi2_inv(optimum.r_opt_abs, optimum.s_opt, 3) / n
    return _within("A7", value, 32.0, 0.32, "ξ⁻²₍₃₎/n at n=1e3")


def check_loss_point(settings: VerifySettings) -> CriterionResult:
    reports = loss_scan(0.2, [0.0, 0.69], tolerance=settings.tolerance, max_dim=settings.max_dim)
    reports.raise_skipped()
    clean, lossy = reports
    return _within("A8", lossy.f_q_over_n / clean.f_q_over_n, 0.46, 0.03,
                   "F_Q/n retained at γt=0.69")


def check_detection_noise(settings: VerifySettings) -> CriterionResult:
    reports = noise_scan(0.2, [0.0, 1 / (2 * math.sqrt(2))], tolerance=settings.tolerance,
                         max_dim=settings.max_dim)
    reports.raise_skipped()
    clean, noisy = reports
    third = noisy.xi2_inv[2] / clean.xi2_inv[2]
    fourth = noisy.xi2_inv[3] / clean.xi2_inv[3]
    passed = abs(third - 0.356) <= 0.02 and abs(fourth - NOISY_FOURTH_ORDER_RATIO) <= 0.02
    return CriterionResult("A9", third, 0.356, 0.02, passed,
                           f"ξ⁻²₍₄₎ ratio {fourth:.4f} (target {NOISY_FOURTH_ORDER_RATIO})")


def check_rus(settings: VerifySettings) -> CriterionResult:
    worst = 0.0
    for n_iter in range(1, 6):
        for r in (0.05, 0.1):
            for s in (0.2, 0.5):
                params = RusParams(r=r, s=s, n_iter=n_iter)
                z, mean_n, mean_n2, _ = rus_analytic(params)
                state = rus_state_numeric(params, tolerance=settings.tolerance,
                                          max_dim=settings.max_dim)
                _, z_numeric = rus_amplitudes(params, state.dim, settings.tolerance)
                n_op = make_ladder(state.dim).n
                numeric = (z_numeric, expectation(state, n_op).real,
                           expectation(state, n_op @ n_op).real)
                worst = max(worst, max(abs(a - b) / max(1.0, abs(a))
                                       for a, b in zip((z, mean_n, mean_n2), numeric)))
    rus_rows = envelope(protocol_scan("rus", ListHelper.linspace(0.0, 0.4, 41),
                                      ListHelper.linspace(0.0, 2.0, 41), n_iter=1), bins=20)
    beaten = all(row.f_q_over_n > 8 * (row.n + 1) for row in rus_rows if row.n >= 0.5)
    return CriterionResult("A10", worst, 0.0, 1e-6, worst <= 1e-6 and beaten,
                           f"rus(1) envelope above 8(n+1) for n≥0.5: {beaten}")


def check_kerr_sandwich(settings: VerifySettings) -> CriterionResult:
    params = KerrParams.on_scan_line(r=0.1, s=0.1, lam=4.0)
    state = kerr_effective_state(params, tolerance=settings.tolerance, max_dim=settings.max_dim)
    n_op = make_ladder(state.dim).n
    n = expectation(state, n_op).real
    kerr_ratio = pure_qfi(state, n_op) / n
    ideal_ratio = am.qfi_ns(n, params.s) / n
    return _within("A11", kerr_ratio / ideal_ratio, 1.0, 0.05, "Kerr F_Q/n over ideal at λ=4, α=64")


def check_kerr_no_gain(settings: VerifySettings) -> CriterionResult:
    norm = kerr_commutator_norm(1.0, min(60, settings.max_dim))
    rows = protocol_scan("kerr_plain", s_values=(0.05, 0.1, 0.2), deltas=(-1.0, -0.5, 0.0),
                         kerr_values=(0.05, 0.1), max_dim=settings.max_dim)
    rows.raise_skipped()
    excess = max(row.f_q_over_n - 8 * (row.n + 1) for row in rows)
    return CriterionResult("A12", excess, 0.0, 1e-6, norm < 1e-12 and excess <= 1e-6,
                           f"‖[exp(iKa†²a²), n]‖ = {norm:.2e}")


def check_local_unbiasedness(settings: VerifySettings) -> CriterionResult:
    rng = np.random.default_rng(settings.seed + 1)
    worst = 0.0
    for r, s in zip(rng.uniform(0.01, 0.2, 10), rng.uniform(0.0, 0.4, 10)):
        state = cubic_phase_state(r, s, tolerance=settings.tolerance, max_dim=settings.max_dim)
        for a, b in MONOMIALS:
            worst = max(worst, abs(expectation(state, symmetrized(a, b, state.dim))))
    return _at_most("A13", worst, 1e-10, "max |<X_i>| over six observables")


def check_displacement(settings: VerifySettings) -> CriterionResult:
    worst = -math.inf
    for r in ListHelper.linspace(0.0, 0.3, 7):
        for s in ListHelper.linspace(0.01, 1.0, 34):
            n = am.population(r, s)
            worst = max(worst, am.displacement_qfi(r, s) / am.squeezed_vacuum_displacement_qfi(n) - 1)
    return _at_most("A14", worst, 1e-12, "cubic over squeezed-vacuum displacement QFI − 1")


def check_trisqueeze(settings: VerifySettings) -> CriterionResult:
    dims = [90, 180]
    if settings.max_dim < dims[-1]:
        raise ConvergenceError(
            f"trisqueezing checks need max_dim >= {dims[-1]}, got {settings.max_dim}")
    t = 0.05
    state = trisqueezed_state(TrisqueezeParams(t=t))
    mean_n = number_moments(state)[0]
    oracle = trisqueeze_chain_population(t)
    small_t = trisqueeze_small_t_population(0.01)
    series_error = abs(trisqueeze_chain_population(0.01) - small_t) / small_t
    rows = trisqueeze_population_scan(ListHelper.linspace(0.0, 1.9, 39), dims)
    largest = [row for row in rows if row.dim_used == dims[-1]]
    early = max(row.n for row in largest if 0.8 <= row.extras["t"] <= 1.6)
    late = min(row.n for row in largest if 1.6 <= row.extras["t"] <= 1.9)
    returns = late < 0.5 * early
    error = abs(mean_n - oracle) / oracle
    passed = error <= 1e-4 and series_error <= 1e-3 and returns
    return CriterionResult("A15", error, 0.0, 1e-4, passed,
                           f"18t²+324t⁴ at t=0.01 off by {series_error:.1e}; "
                           f"population return on 1.6≤t≤1.9: {late:.3f} vs {early:.3f}")


CRITERIA: Dict[str, Callable[[VerifySettings], CriterionResult]] = {
    "A1": check_squeezed_vacuum_qfi,
    "A2": check_asymptotic_scaling,
    "A3": check_optimal_parameters,
    "A4": check_qfi_oracle,
    "A5": check_saturation,
    "A6": check_hierarchy,
    "A7": check_third_order,
    "A8": check_loss_point,
    "A9": check_detection_noise,
    "A10": check_rus,
    "A11": check_kerr_sandwich,
    "A12": check_kerr_no_gain,
    "A13": check_local_unbiasedness,
    "A14": check_displacement,
    "A15": check_trisqueeze,
}


def verify(settings: Optional[VerifySettings] = None,
           criteria: Optional[List[str]] = None) -> List[CriterionResult]:
    """
    Evaluate the acceptance criteria. Failures, including raised errors, become report rows.
    """
    settings = settings or VerifySettings()
    results = []
    for name in criteria or list(CRITERIA):
        logging.debug(f"Verify::verify::{name}")
        try:
            results.append(CRITERIA[name](settings))
        except (CubicMetrologyError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
            logging.warning(f"Verify::verify::{name}::{type(e).__name__}::{e}")
            results.append(CriterionResult(name, math.nan, math.nan, math.nan, False,
                                           f"{type(e).__name__}: {e}"))
    return results


def format_table(results: List[CriterionResult]) -> str:
    header = f"{'criterion':<10}{'measured':>16}{'target':>14}{'tolerance':>12}  {'pass':<6}detail"
    lines = [header, "-" * len(header)]
    for result in results:
        lines.append(f"{result.criterion:<10}{result.measured:>16.8g}{result.target:>14.8g}"
                     f"{result.tolerance:>12.3g}  {'yes' if result.passed else 'NO':<6}{result.detail}")
    return "\n".join(lines)


def rows(results: List[CriterionResult]) -> List[dict]:
    return [vars(result).copy() for result in results]


def write_report(results: List[CriterionResult], filepath: str):
    FileHelper.to_json(results, filepath)
