import argparse
import json
import logging
import math
import os
import pathlib
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import AnalyticMetrology as am
from . import Verify
from .Errors import CubicMetrologyError, ConfigError
from .FockCore import (DEFAULT_MAX_DIM, TRUNCATION_TOLERANCE, cubic_phase_state, expectation,
                       make_ladder, pure_qfi, wigner_grid)
from .MomentMethod import chi2_inv_closed_form_n, xi2_inv
from .NoiseModels import OPERATING_POINT_N, loss_scan, noise_scan
from .PrepProtocols import (ENVELOPE_BINS, ENVELOPE_RANGE, envelope, protocol_scan,
                            trisqueeze_population_scan)
from .Report import SensitivityReport, SensitivityReportList
from .Utils import FileHelper, ListHelper

OUTPUT_DIR_ENV = "CUBIC_METROLOGY_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "output"
SCHEMA_DIR = pathlib.Path(__file__).parent / "schemas" / "v1"
COMMANDS = ("fig1a", "fig1b", "fig2", "fig3b", "fig3c", "fig4", "sm_fig_rus", "sm_fig_kerr",
            "sm_fig_trisqueeze", "sm_fig_displacement", "point", "verify")
FORMATS = ("csv", "json")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_CONFIG = 2

# (start, stop, num); geometric for n
DEFAULT_RANGES = {
    "fig1b": {"r": (0.0, 0.5, 101), "s": (0.0, 0.6, 101)},
    "fig2": {"n": (0.01, 1e4, 121)},
    "fig3b": {"gamma": (0.0, 1.0, 21)},
    "fig3c": {"sigma": (0.0, 2.0, 81)},
    "fig4": {"r": (0.0, 0.4, 41), "s": (0.0, 2.0, 41), "t": (0.05, 0.6, 12)},
    "sm_fig_rus": {"r": (0.0, 0.4, 21), "s": (0.0, 1.0, 21)},
    "sm_fig_kerr": {"r": (0.02, 0.2, 10), "s": (0.0, 0.3, 4)},
    "sm_fig_trisqueeze": {"t": (0.0, 1.9, 96)},
    "sm_fig_displacement": {"r": (0.0, 0.3, 4), "s": (0.0, 1.0, 51)},
}
DEFAULT_N_ITERS = [1, 2, 3, 4, 5]
DEFAULT_LAMBDAS = [2.0, 3.0, 4.0, 5.0]
DEFAULT_DELTAS = [-1.0, -0.5, 0.0]
DEFAULT_KERR_VALUES = [0.05, 0.1]
DEFAULT_TRISQUEEZE_DIMS = [60, 90, 120, 180]


def load_schema(command: str) -> List[str]:
    """Column names of a command, in output order."""
    schema = json.loads((SCHEMA_DIR / f"{command}.json").read_text(encoding="utf-8"))
    return [column["name"] for column in schema["columns"]]


@dataclass
class RunConfig():
    """
    Dataclass for one CLI invocation.

    Ranges are [start, stop, num]; the fig2 n-range is geometric, all others linear.

    Attributes:
        command (str): One of COMMANDS.
        output (str, optional): Output file; relative paths resolve against the output directory.
        format (str): 'csv' or 'json'.
        seed (int): Seed for randomized verification points.
        max_dim (int, optional): Largest Fock truncation tried by automatic dimension selection;
            None uses the command's default (see dim_cap).
        tolerance (float): Truncation tail tolerance.
        workers (int): Threads for grid evaluation.
    """
    command: str
    output: Optional[str] = None
    format: str = "csv"
    seed: int = 0
    max_dim: Optional[int] = None
    tolerance: float = TRUNCATION_TOLERANCE
    workers: int = 1
    r: Optional[float] = None
    s: Optional[float] = None
    n: Optional[float] = None
    r_range: Optional[List[float]] = None
    s_range: Optional[List[float]] = None
    n_range: Optional[List[float]] = None
    gamma_range: Optional[List[float]] = None
    sigma_range: Optional[List[float]] = None
    t_range: Optional[List[float]] = None
    lambdas: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    n_iters: List[int] = field(default_factory=lambda: list(DEFAULT_N_ITERS))
    resolution: int = 101
    log_level: str = "WARNING"

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command}; expected one of {COMMANDS}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {LOG_LEVELS}")
        if self.max_dim is not None and self.max_dim < 2:
            raise ConfigError("max_dim must be at least 2")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if self.resolution < 2:
            raise ConfigError("resolution must be at least 2")
        for name in ("r_range", "s_range", "n_range", "gamma_range", "sigma_range", "t_range"):
            value = getattr(self, name)
            if value is None:
                continue
            if len(value) != 3 or int(value[2]) < 1 or int(value[2]) != value[2]:
                raise ConfigError(f"{name} must be [start, stop, num] with num ≥ 1")
        if self.n_range is not None and self.n_range[0] <= 0:
            raise ConfigError("n_range must start above 0")
        if not self.lambdas or any(lam <= 1 for lam in self.lambdas):
            raise ConfigError("lambdas must be nonempty and greater than 1")
        if not self.n_iters or any(n_iter < 1 for n_iter in self.n_iters):
            raise ConfigError("n_iters must be nonempty positive integers")
        if self.command == "point" and (self.r is None or self.s is None):
            raise ConfigError("point requires --r and --s")
        if self.s is not None and self.s < 0:
            raise ConfigError("s must be non-negative")
        if self.n is not None and self.n <= 0:
            raise ConfigError("n must be positive")

    def dim_cap(self) -> int:
        """max_dim, or the default cap: ORACLE_MAX_DIM for verify, DEFAULT_MAX_DIM otherwise."""
        if self.max_dim is not None:
            return self.max_dim
        return Verify.ORACLE_MAX_DIM if self.command == "verify" else DEFAULT_MAX_DIM

    def grid(self, name: str, geometric: bool = False) -> List[float]:
        value = getattr(self, f"{name}_range")
        if value is None:
            value = DEFAULT_RANGES[self.command][name]
        start, stop, num = value
        if geometric:
            return ListHelper.geomspace(start, stop, int(num))
        return ListHelper.linspace(start, stop, int(num))

    def output_path(self) -> Optional[str]:
        """
        Target file. Relative paths and the default name go below $CUBIC_METROLOGY_OUTPUT_DIR.

        verify writes a file only when output is set.
        """
        if self.output is None and self.command == "verify":
            return None
        directory = os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR)
        output = self.output or f"{self.command}.{self.format}"
        if os.path.isabs(output):
            return output
        return os.path.join(directory, output)

    def to_json(self, filepath: str):
        FileHelper.to_json(self, filepath)

    @staticmethod
    def from_json(filepath: str) -> 'RunConfig':
        data = FileHelper.from_json(filepath)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return RunConfig(**data)


@dataclass
class CommandResult():
    """
    Rows of one command.

    Attributes:
        rows (List[Dict[str, Any]]): Output rows in schema order.
        skipped (List[Tuple[Any, Exception]]): Grid points dropped after a truncation or
            convergence error, with that error.
    """
    rows: List[Dict[str, Any]]
    skipped: List[Tuple[Any, Exception]] = field(default_factory=list)

    @staticmethod
    def from_reports(reports: SensitivityReportList) -> 'CommandResult':
        return CommandResult(reports.rows(), list(reports.skipped))


# Commands

def _fig1a(config: RunConfig) -> CommandResult:
    r = 0.1 if config.r is None else config.r
    s = 0.2 if config.s is None else config.s
    state = cubic_phase_state(r, s, tolerance=config.tolerance, max_dim=config.dim_cap())
    axis = ListHelper.linspace(-6.0, 6.0, config.resolution)
    w = wigner_grid(state, (-6.0, 6.0), (-6.0, 6.0), config.resolution)
    return CommandResult([{"x": x, "p": p, "w": float(w[i, j]), "r": r, "s": s,
                           "dim_used": state.dim, "truncation_tail": state.tail_mass}
                          for i, p in enumerate(axis) for j, x in enumerate(axis)])


def _fig1b(config: RunConfig) -> CommandResult:
    reports = protocol_scan("ideal", config.grid("r"), config.grid("s"), workers=config.workers)
    optima = {}
    for report in reports:
        if report.n > 0:
            if report.n not in optima:
                optima[report.n] = am.optimal_squeezing(report.n).s_opt
            report.extras["s_opt"] = optima[report.n]
    return CommandResult.from_reports(reports)


def _fig2(config: RunConfig) -> CommandResult:
    n_values = config.grid("n", geometric=True)
    if config.n is not None and config.n_range is None:
        n_values = ListHelper.geomspace(min(0.01, config.n), config.n,
                                        int(DEFAULT_RANGES["fig2"]["n"][2]))
    rows = []
    for n in n_values:
        optimum = am.optimal_squeezing(n)
        xi = [chi2_inv_closed_form_n(n, optimum.s_opt, k) / n for k in range(1, 5)]
        report = SensitivityReport(
            n=n, r=optimum.r_opt_abs, s=optimum.s_opt, f_q=optimum.f_q_max,
            f_q_over_n=optimum.f_q_max / n, xi2_inv=xi, protocol="fig2",
            extras={"s_opt": optimum.s_opt, "r_opt_abs": optimum.r_opt_abs,
                    "squeezed_vacuum_f_q_over_n": 8 * (n + 1), "coherent_f_q_over_n": 4.0,
                    "asymptote_f_q_over_n": am.C2 * n, "method": optimum.method})
        rows.append(report.to_row())
    return CommandResult(rows)


def _fig3b(config: RunConfig) -> CommandResult:
    n = OPERATING_POINT_N if config.n is None else config.n
    return CommandResult.from_reports(
        loss_scan(n, config.grid("gamma"), workers=config.workers, tolerance=config.tolerance,
                  max_dim=config.dim_cap()))


def _fig3c(config: RunConfig) -> CommandResult:
    n = OPERATING_POINT_N if config.n is None else config.n
    clean = noise_scan(n, [0.0], tolerance=config.tolerance, max_dim=config.dim_cap())
    clean.raise_skipped()
    reference = clean[0].xi2_inv
    reports = noise_scan(n, config.grid("sigma"), workers=config.workers,
                         tolerance=config.tolerance, max_dim=config.dim_cap())
    for report in reports:
        for order, (value, clean_value) in enumerate(zip(report.xi2_inv, reference), start=1):
            report.extras[f"xi2_inv_ratio_{order}"] = (value / clean_value if clean_value
                                                       else math.nan)
    return CommandResult.from_reports(reports)


def _fig4(config: RunConfig) -> CommandResult:
    r_values, s_values = config.grid("r"), config.grid("s")
    n_values = ListHelper.geomspace(*ENVELOPE_RANGE, ENVELOPE_BINS)
    ideal = SensitivityReportList()
    for n in n_values:
        optimum = am.optimal_squeezing(n)
        ideal.append(SensitivityReport(n=n, r=optimum.r_opt_abs, s=optimum.s_opt,
                                       f_q=optimum.f_q_max, f_q_over_n=optimum.f_q_max / n))
    scans = [ideal,
             protocol_scan("squeezed_vacuum", s_values=ListHelper.linspace(0.0, 2.5, 201))]
    for n_iter in config.n_iters:
        scans.append(protocol_scan("rus", r_values, s_values, n_iter=n_iter,
                                   max_dim=config.dim_cap(), workers=config.workers))
    scans.append(protocol_scan("kerr", ListHelper.linspace(0.02, 0.2, 10),
                               ListHelper.linspace(0.0, 0.3, 4), lambdas=config.lambdas,
                               max_dim=config.dim_cap(), workers=config.workers))
    scans.append(protocol_scan("kerr_plain", s_values=[0.05, 0.1, 0.2, 0.3],
                               deltas=DEFAULT_DELTAS, kerr_values=DEFAULT_KERR_VALUES,
                               max_dim=config.dim_cap(), workers=config.workers))
    scans.append(protocol_scan("trisqueeze", t_values=config.grid("t"), workers=config.workers))
    result = CommandResult([])
    for scan in scans:
        result.skipped.extend(scan.skipped)
        for protocol, reports in scan.protocol_dictionary.items():
            for report in envelope(reports):
                row = report.to_row()
                row["protocol"] = protocol
                result.rows.append(row)
    return result


def _sm_fig_rus(config: RunConfig) -> CommandResult:
    result = CommandResult([])
    for n_iter in config.n_iters:
        reports = protocol_scan("rus", config.grid("r"), config.grid("s"), n_iter=n_iter,
                                max_dim=config.dim_cap(), workers=config.workers)
        result.rows.extend(reports.rows())
        result.skipped.extend(reports.skipped)
    return result


def _sm_fig_kerr(config: RunConfig) -> CommandResult:
    reports = protocol_scan("kerr", config.grid("r"), config.grid("s"), lambdas=config.lambdas,
                            max_dim=config.dim_cap(), workers=config.workers)
    for report in reports:
        feasible = report.n >= math.sinh(report.s) ** 2
        report.extras["ideal_f_q_over_n"] = (am.qfi_ns(report.n, report.s) / report.n
                                             if feasible and report.n > 0 else math.nan)
    return CommandResult.from_reports(reports)


def _sm_fig_trisqueeze(config: RunConfig) -> CommandResult:
    cap = config.dim_cap()
    dims = [dim for dim in DEFAULT_TRISQUEEZE_DIMS if dim <= cap] or [cap]
    return CommandResult.from_reports(trisqueeze_population_scan(config.grid("t"), dims))


def _sm_fig_displacement(config: RunConfig) -> CommandResult:
    rows = []
    for r in config.grid("r"):
        for s in config.grid("s"):
            n = am.population(r, s)
            if n <= 0:
                continue
            f_q = am.displacement_qfi(r, s)
            rows.append({"r": r, "s": s, "n": n, "displacement_f_q": f_q,
                         "displacement_f_q_over_n": f_q / n,
                         "squeezed_vacuum_displacement_f_q_over_n":
                             am.squeezed_vacuum_displacement_qfi(n) / n,
                         "dim_used": 0, "truncation_tail": 0.0})
    return CommandResult(rows)


def _point(config: RunConfig) -> CommandResult:
    r, s = config.r, config.s
    n = am.population(r, s)
    f_q = am.qfi_rs(r, s)
    xi = [xi2_inv(r, s, k) for k in range(1, 5)] if n > 0 else [None] * 4
    report = SensitivityReport(
        n=n, r=r, s=s, f_q=f_q, f_q_over_n=f_q / n if n > 0 else math.nan, xi2_inv=xi,
        protocol="point",
        extras={"n2": am.population_second_moment(r, s), "squeezing_db": am.squeezing_db(s),
                "displacement_f_q": am.displacement_qfi(r, s)})
    try:
        state = cubic_phase_state(r, s, tolerance=config.tolerance, max_dim=config.dim_cap())
    except CubicMetrologyError as e:
        logging.warning(f"Cli::point::numeric oracle unavailable::{e}")
        return CommandResult([report.to_row()])
    n_op = make_ladder(state.dim).n
    report.dim_used = state.dim
    report.truncation_tail = state.tail_mass
    report.extras["f_q_numeric"] = pure_qfi(state, n_op)
    report.extras["n_numeric"] = expectation(state, n_op).real
    return CommandResult([report.to_row()])


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig], CommandResult]] = {
    "fig1a": _fig1a,
    "fig1b": _fig1b,
    "fig2": _fig2,
    "fig3b": _fig3b,
    "fig3c": _fig3c,
    "fig4": _fig4,
    "sm_fig_rus": _sm_fig_rus,
    "sm_fig_kerr": _sm_fig_kerr,
    "sm_fig_trisqueeze": _sm_fig_trisqueeze,
    "sm_fig_displacement": _sm_fig_displacement,
    "point": _point,
}


def write_rows(rows: Sequence[Dict[str, Any]], columns: Sequence[str], filepath: str, fmt: str):
    if fmt == "csv":
        FileHelper.to_csv(rows, columns, filepath)
    else:
        FileHelper.to_json([{column: row.get(column) for column in columns} for row in rows],
                           filepath)


def _run_verify(config: RunConfig) -> int:
    settings = Verify.VerifySettings(max_dim=config.dim_cap(), tolerance=config.tolerance,
                                     seed=config.seed)
    results = Verify.verify(settings)
    print(Verify.format_table(results))
    filepath = config.output_path()
    if filepath is not None:
        write_rows(Verify.rows(results), load_schema("verify"), filepath, config.format)
    return EXIT_OK if all(result.passed for result in results) else EXIT_COMPUTATION


def run(config: RunConfig) -> int:
    """
    Execute one command and write its table. Returns the process exit status: grid points
    skipped after a truncation or convergence error still leave the other rows written, but
    the run exits with EXIT_COMPUTATION.
    """
    try:
        config.validate()
        filepath = config.output_path()
        if filepath is not None:
            FileHelper.check_filepath(filepath)
            if not os.access(os.path.dirname(os.path.abspath(filepath)), os.W_OK):
                raise ConfigError(f"output path {filepath} is not writable")
    except (ConfigError, OSError) as e:
        logging.error(f"Cli::run::config::{e}")
        return EXIT_CONFIG
    logging.info(f"Cli::run::{config.command}::{filepath}")
    try:
        if config.command == "verify":
            return _run_verify(config)
        result = COMMAND_HANDLERS[config.command](config)
        write_rows(result.rows, load_schema(config.command), filepath, config.format)
    except OSError as e:
        logging.error(f"Cli::run::write::{e}")
        return EXIT_CONFIG
    except (CubicMetrologyError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        logging.error(f"Cli::run::{config.command}::{type(e).__name__}::{e}")
        return EXIT_COMPUTATION
    for point, error in result.skipped:
        logging.error(f"Cli::run::{config.command}::skipped::{point}::"
                      f"{type(error).__name__}::{error}")
    return EXIT_COMPUTATION if result.skipped else EXIT_OK


def _range(value: str) -> List[float]:
    parts = value.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start,stop,num")
    try:
        return [float(parts[0]), float(parts[1]), int(parts[2])]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _floats(value: str) -> List[float]:
    return [float(v) for v in value.split(",") if v]


def _ints(value: str) -> List[int]:
    return [int(v) for v in value.split(",") if v]


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="cubic-metrology",
        description="Rotation-sensing data for cubic phase states and their preparation schemes")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="JSON RunConfig; flags override it")
    parser.add_argument("--output", default=None,
                        help=f"Output file (relative to ${OUTPUT_DIR_ENV}, default ./output)")
    parser.add_argument("--format", default=None, choices=FORMATS)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--max-dim", dest="max_dim", type=int, default=None)
    parser.add_argument("--tolerance", type=float, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--r", type=float, default=None, help="Cubicity")
    parser.add_argument("--s", type=float, default=None, help="Squeezing strength")
    parser.add_argument("--n", type=float, default=None, help="Population (fig2: largest n)")
    parser.add_argument("--r-range", dest="r_range", type=_range, default=None,
                        help="start,stop,num")
    parser.add_argument("--s-range", dest="s_range", type=_range, default=None)
    parser.add_argument("--n-range", dest="n_range", type=_range, default=None)
    parser.add_argument("--gamma-range", dest="gamma_range", type=_range, default=None)
    parser.add_argument("--sigma-range", dest="sigma_range", type=_range, default=None)
    parser.add_argument("--t-range", dest="t_range", type=_range, default=None)
    parser.add_argument("--lambdas", type=_floats, default=None, help="Comma-separated λ values")
    parser.add_argument("--n-iters", dest="n_iters", type=_ints, default=None,
                        help="Comma-separated repeat-until-success iteration counts")
    parser.add_argument("--resolution", type=int, default=None)
    parser.add_argument("--log-level", dest="log_level", default=None,
                        type=str.upper, choices=LOG_LEVELS)
    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        base = asdict(RunConfig.from_json(args.config))
    else:
        base = {}
    overrides = {key: value for key, value in vars(args).items()
                 if key != "config" and value is not None}
    base.update(overrides)
    return RunConfig(**base)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        config = build_config(args)
    except (ConfigError, ValueError, TypeError) as e:
        logging.basicConfig(level=logging.WARNING)
        logging.error(f"Cli::main::config::{e}")
        return EXIT_CONFIG
    logging.basicConfig(level=getattr(logging, config.log_level.upper(), logging.WARNING),
                        format="%(asctime)s %(levelname)s %(message)s")
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
