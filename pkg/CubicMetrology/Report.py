import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .Utils import FileHelper


@dataclass
class SensitivityReport():
    """
    One grid point of any scan: resources, sensitivity and provenance.

    Attributes:
        n (float): Mean photon number of the state.
        r (float): Cubicity (or the protocol's cubicity-like parameter).
        s (float): Squeezing strength.
        f_q (float): Quantum Fisher information.
        f_q_over_n (float): f_q / n.
        xi2_inv (List[Optional[float]]): ξ⁻² of order 1..4; None where not computed.
        gamma_t (float, optional): Loss γt of the point.
        sigma (float, optional): Detection-noise standard deviation.
        protocol (str): Tag of the producing protocol or command.
        dim_used (int): Truncation dimension (0 for closed-form rows).
        truncation_tail (float): Population of the last levels (0 for closed-form rows).
        extras (Dict[str, Any]): Command-specific columns.
    """
    n: float
    r: float
    s: float
    f_q: float
    f_q_over_n: float
    xi2_inv: List[Optional[float]] = field(default_factory=lambda: [None] * 4)
    gamma_t: Optional[float] = None
    sigma: Optional[float] = None
    protocol: str = "ideal"
    dim_used: int = 0
    truncation_tail: float = 0.0
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.f_q < 0:
            raise ValueError(f"f_q must be non-negative, got {self.f_q}")
        if len(self.xi2_inv) != 4:
            raise ValueError("xi2_inv must hold four entries")
        present = [v for v in self.xi2_inv if v is not None]
        if len(present) == 4 and any(b < a - 1e-9 * max(1.0, abs(a))
                                     for a, b in zip(present, present[1:])):
            logging.warning(f"SensitivityReport::hierarchy::{self.protocol}::{present}")

    def to_row(self) -> Dict[str, Any]:
        row = {key: value for key, value in asdict(self).items()
               if key not in ("xi2_inv", "extras")}
        for order, value in enumerate(self.xi2_inv, start=1):
            row[f"xi2_inv_{order}"] = value
        row.update(self.extras)
        return row

    def to_json(self, filepath: str):
        FileHelper.to_json(self, filepath)

    @staticmethod
    def from_json(filepath: str) -> 'SensitivityReport':
        return SensitivityReport(**FileHelper.from_json(filepath))


class SensitivityReportList(List[SensitivityReport]):
    """
    Reports of one scan in grid order.

    Attributes:
        skipped (List[Tuple[Any, Exception]]): Grid points left out after a truncation or
            convergence error, with that error.
    """

    def __init__(self, reports: Optional[List[SensitivityReport]] = None,
                 skipped: Optional[List[Tuple[Any, Exception]]] = None):
        super().__init__(reports if reports is not None else [])
        self.skipped: List[Tuple[Any, Exception]] = list(skipped or [])
        self.rebuild_cache()

    def raise_skipped(self):
        """Re-raise the error of the first skipped point, if any."""
        if self.skipped:
            raise self.skipped[0][1]

    def rebuild_cache(self):
        self._protocol_dictionary_cache = defaultdict(SensitivityReportList)
        for report in self:
            self._protocol_dictionary_cache[report.protocol].append(report)

    @property
    def protocol_dictionary(self) -> Dict[str, 'SensitivityReportList']:
        """Reports grouped by protocol tag."""
        if not self._protocol_dictionary_cache:
            self.rebuild_cache()
        return self._protocol_dictionary_cache

    def max_f_q_over_n(self) -> float:
        finite = [report.f_q_over_n for report in self if math.isfinite(report.f_q_over_n)]
        if not finite:
            raise ValueError("no finite rows")
        return max(finite)

    def rows(self) -> List[Dict[str, Any]]:
        return [report.to_row() for report in self]

    def to_csv(self, columns: Sequence[str], filepath: str):
        FileHelper.to_csv(self.rows(), columns, filepath)

    def to_json(self, filepath: str):
        FileHelper.to_json(list(self), filepath)

    def rows_to_json(self, columns: Sequence[str], filepath: str):
        """Flat rows restricted to columns, mirroring to_csv."""
        FileHelper.to_json([{column: row.get(column) for column in columns}
                            for row in self.rows()], filepath)

    @staticmethod
    def from_json(filepath: str) -> 'SensitivityReportList':
        return SensitivityReportList([SensitivityReport(**item)
                                      for item in FileHelper.from_json(filepath)])
