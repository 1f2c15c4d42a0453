from .AnalyticMetrology import CubicParams, OptimalPoint, optimal_squeezing, population, qfi_ns, qfi_rs
from .Cli import RunConfig, main, run
from .FockCore import DensityOperator, FockState, OperatorMatrix, cubic_phase_state, make_ladder
from .MomentMethod import MomentData, ObservableSet, chi2_inv, xi2_inv, xi2_inv_state
from .NoiseModels import DetectionNoise, LossConfig, lossy_cubic_state, noisy_xi2_inv
from .PrepProtocols import KerrParams, RusParams, TrisqueezeParams, envelope, protocol_scan
from .Report import SensitivityReport, SensitivityReportList
from .Verify import CriterionResult, verify

__all__ = ["CubicParams", "OptimalPoint", "optimal_squeezing", "population", "qfi_ns", "qfi_rs",
           "RunConfig", "main", "run",
           "DensityOperator", "FockState", "OperatorMatrix", "cubic_phase_state", "make_ladder",
           "MomentData", "ObservableSet", "chi2_inv", "xi2_inv", "xi2_inv_state",
           "DetectionNoise", "LossConfig", "lossy_cubic_state", "noisy_xi2_inv",
           "KerrParams", "RusParams", "TrisqueezeParams", "envelope", "protocol_scan",
           "SensitivityReport", "SensitivityReportList", "CriterionResult", "verify"]
