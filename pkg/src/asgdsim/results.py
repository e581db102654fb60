"""Run results: trace records, solver output container, and trace evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kmeans import Dataset, GroundTruth, ground_truth_error, quantization_error
from .model import ModelState
from .seeding import eval_rng


@dataclass(frozen=True)
class TracePoint:
    """One convergence checkpoint.

    ``samples`` counts every sample any worker has consumed by the moment the
    checkpoint was taken; ``time_s`` is virtual seconds in virtual-time runs
    and elapsed wall seconds otherwise.
    """

    samples: int
    time_s: float
    quant_error: float
    gt_error: float
    msgs_sent: int = 0
    msgs_accepted: int = 0
    b: int = 0


@dataclass
class SolverResult:
    """What every optimizer returns: the answer plus its convergence trace."""

    final_state: ModelState
    trace: list[TracePoint]
    worker_states: list[ModelState] | None = None
    worker_stats: list | None = None
    transport: list | None = None  # per-node NodeStats snapshots, senders first
    controller_q: list[list[int]] | None = None
    overwrites: list[int] | None = None

    def check_trace_monotone(self) -> None:
        for prev, cur in zip(self.trace, self.trace[1:]):
            if cur.samples < prev.samples or cur.time_s < prev.time_s:
                raise AssertionError("trace must be non-decreasing in samples and time")


class Evaluator:
    """Fixed-subsample trace evaluation.

    The quantization error over the full dataset costs m*k*n per checkpoint,
    which dominates large runs, so traces score a deterministic subsample and
    scale the sum back to full-dataset units (an unbiased estimate; exact
    whenever m <= eval_points).  Ground-truth error is always exact.
    """

    def __init__(self, X: Dataset, gt: GroundTruth | None, eval_points: int, seed: int):
        if eval_points < 1:
            raise ValueError("eval_points must be >= 1")
        self.gt = gt
        if X.m <= eval_points:
            self._subset = X
            self._scale = 1.0
        else:
            idx = eval_rng(seed).choice(X.m, size=eval_points, replace=False)
            idx.sort()
            self._subset = Dataset(X.points[idx])
            self._scale = X.m / eval_points

    def quant(self, w: ModelState) -> float:
        return self._scale * quantization_error(self._subset, w)

    def gt_error(self, w: ModelState) -> float:
        if self.gt is None:
            return math.nan
        return ground_truth_error(w, self.gt)


def runtime_to_target(trace: list[TracePoint], target: float) -> float:
    """Virtual time of the first checkpoint at or below ``target`` gt_error.

    Returns inf when the trace never reaches it; resolution is limited by the
    checkpoint spacing.
    """
    for point in trace:
        if not math.isnan(point.gt_error) and point.gt_error <= target:
            return point.time_s
    return math.inf
