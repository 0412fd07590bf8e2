"""Choosing the feature penalty by walking down a ladder of values.

Large penalties give few, well-supported features.  Each rung lowers the
penalty; the walk stops once some feature no longer carries a substantial
share of any sample, and the last rung where every feature did is selected.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .core import ReadCountMatrix, Solution
from .solver import SolverConfig, multi_restart

log = logging.getLogger(__name__)

DEFAULT_LADDER = (50.0, 40.0, 30.0, 20.0, 10.0, 8.0, 6.0, 4.0, 2.0)


def inverse_count_threshold(C_hat: int) -> float:
    return 1.0 / C_hat


@dataclass(frozen=True)
class Rung:
    lambda_sq: float
    C_hat: int
    # smallest per-feature peak weight; NaN when there are no features
    min_max_weight: float
    solution: Solution

    @property
    def row(self) -> tuple[float, int, float]:
        return (self.lambda_sq, self.C_hat, self.min_max_weight)


@dataclass(frozen=True)
class CalibrationTrace:
    rungs: tuple[Rung, ...]
    selected_lambda_sq: float
    selected_solution: Solution
    degenerate: bool = False
    warning: str | None = None

    @property
    def ladder(self) -> list[tuple[float, int, float]]:
        return [r.row for r in self.rungs]


def feature_peaks(solution: Solution) -> np.ndarray:
    """Largest weight each feature reaches over the samples."""
    w = solution.W_hat.w[:, 1:]
    return w.max(axis=0) if w.shape[1] else np.empty(0)


def all_substantial(solution: Solution, threshold_fn: Callable[[int], float]) -> bool:
    if solution.C_hat == 0:
        return False
    return bool(np.all(feature_peaks(solution) > threshold_fn(solution.C_hat)))


def calibrate_lambda(counts: ReadCountMatrix, base_cfg: SolverConfig,
                     ladder: Sequence[float] = DEFAULT_LADDER, restarts_per_rung: int = 100,
                     threshold_fn: Callable[[int], float] = inverse_count_threshold,
                     parallelism: int = 1) -> CalibrationTrace:
    """Descend the ladder while every estimated feature is substantial.

    A feature is substantial when its weight exceeds ``threshold_fn(C_hat)``
    in at least one sample.  If the first rung already fails, it is selected
    anyway and the trace carries a warning; a trace where no rung found any
    feature is flagged ``degenerate``.
    """
    ladder = [float(x) for x in ladder]
    if not ladder:
        raise ValueError("ladder must not be empty")
    if any(x <= 0 for x in ladder):
        raise ValueError("ladder values must be positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly decreasing")
    if restarts_per_rung < 1:
        raise ValueError("restarts_per_rung must be at least 1")

    rungs: list[Rung] = []
    selected: Rung | None = None
    for lam in ladder:
        cfg = replace(base_cfg, model=replace(base_cfg.model, lambda_sq=lam))
        best = multi_restart(counts, cfg, restarts_per_rung, parallelism).best_solution
        peaks = feature_peaks(best)
        rung = Rung(lam, best.C_hat, float(peaks.min()) if peaks.size else float("nan"), best)
        rungs.append(rung)
        log.info("lambda_sq=%g: C_hat=%d, smallest peak weight %.3g", lam, best.C_hat,
                 rung.min_max_weight)
        if not all_substantial(best, threshold_fn):
            # an empty model has nothing left to lose at smaller penalties
            if best.C_hat == 0:
                continue
            break
        selected = rung

    if all(r.C_hat == 0 for r in rungs):
        msg = "no rung found any feature; the data look like background only"
        log.warning(msg)
        return CalibrationTrace(tuple(rungs), rungs[0].lambda_sq, rungs[0].solution,
                                degenerate=True, warning=msg)
    if selected is None:
        first = next(r for r in rungs if r.C_hat > 0)
        msg = (f"a feature is already non-substantial at lambda_sq={first.lambda_sq:g}; "
               "selecting it anyway, consider a larger starting penalty")
        log.warning(msg)
        return CalibrationTrace(tuple(rungs), first.lambda_sq, first.solution, warning=msg)
    return CalibrationTrace(tuple(rungs), selected.lambda_sq, selected.solution)
