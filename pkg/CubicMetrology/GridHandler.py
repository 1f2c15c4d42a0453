import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Tuple, TypeVar

from .Errors import ConvergenceError, GridPointError, TruncationError
from .Report import SensitivityReport, SensitivityReportList

P = TypeVar("P")
R = TypeVar("R")

SOFT_ERRORS = (TruncationError, ConvergenceError)


class GridHandler:
    """
    Evaluates a function over the points of a parameter grid.

    Results keep the order of the grid. Points failing with a soft error (truncation or convergence)
    are logged, left out of the results and listed in skipped; any other failure aborts the scan.

    Attributes:
        context (str): Name of the scan, used in log messages and errors.
        workers (int): Worker threads; 1 evaluates in the calling thread.
        skipped (List[Tuple[Any, Exception]]): (point, error) of the last map, in grid order.
    """

    def __init__(self, context: str, workers: int = 1) -> None:
        if workers < 1:
            raise ValueError("workers must be a positive integer")
        self.context = context
        self.workers = workers
        self.skipped: List[Tuple[Any, Exception]] = []

    @staticmethod
    def handle_exception(context: str, point, e: Exception) -> None:
        """
        Log a failed grid point.

        Soft errors return None so that the caller can skip the point. Every other exception is
        logged as an error and re-raised as GridPointError with the point attached.
        """
        if isinstance(e, SOFT_ERRORS):
            logging.warning(f"{context}::skipped::{point}::{e}")
            return None
        logging.error(f"{context}::failed::{point}::{e}")
        raise GridPointError(context, point, e) from e

    def _evaluate(self, func: Callable[[P], R], point: P) -> Tuple[Optional[R], Optional[Exception]]:
        try:
            return func(point), None
        except Exception as e:
            GridHandler.handle_exception(self.context, point, e)
            return None, e

    def map(self, func: Callable[[P], R], points: Iterable[P]) -> List[Tuple[P, R]]:
        """(point, result) pairs in grid order, soft failures moved to skipped."""
        points = list(points)
        if not points:
            raise ValueError(f"{self.context}: grid must not be empty")
        logging.debug(f"GridHandler::map::{self.context}::{len(points)}::{self.workers}")
        if self.workers == 1:
            outcomes = [self._evaluate(func, point) for point in points]
        else:
            executor = ThreadPoolExecutor(max_workers=self.workers)
            try:
                outcomes = list(executor.map(lambda point: self._evaluate(func, point), points))
            except BaseException:
                executor.shutdown(wait=False, cancel_futures=True)
                raise
            executor.shutdown(wait=True)
        self.skipped = [(point, error) for point, (_, error) in zip(points, outcomes)
                        if error is not None]
        if self.skipped:
            logging.warning(f"GridHandler::map::{self.context}::{len(self.skipped)} of "
                            f"{len(points)} points skipped")
        return [(point, result) for point, (result, error) in zip(points, outcomes)
                if error is None]

    def map_reports(self, func: Callable[[P], SensitivityReport],
                    points: Iterable[P]) -> SensitivityReportList:
        """map() collected into a report list that carries the skipped points."""
        results = self.map(func, points)
        return SensitivityReportList([report for _, report in results], self.skipped)
