"""Comparison optimizers: sequential mini-batch SGD, communication-free
parallel SGD with final averaging, and full-batch gradient descent.

All three share the engine's RNG and partition discipline (see ``seeding``),
which is what makes the degenerate configurations of the asynchronous engine
collapse onto them bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .engine import DEFAULT_COST, CostModel
from .kmeans import Dataset, minibatch_update
from .model import Hyperparams, ModelState, StateDimensionError, apply_descent_step
from .results import Evaluator, SolverResult, TracePoint
from .seeding import partition_points, rng_streams


def _checkpoint_every(iterations: int, trace_points: int) -> int:
    return max(1, iterations // max(1, trace_points))


def sgd_run(X: Dataset, hp: Hyperparams, w0: ModelState, *, gt=None,
            cost: CostModel = DEFAULT_COST, trace_points: int = 100,
            eval_points: int = 2048) -> SolverResult:
    """Sequential mini-batch SGD; ``hp.b`` samples per step, one worker.

    ``hp.workers`` is ignored: this is the single-stream baseline.
    """
    if X.n != w0.n:
        raise StateDimensionError(f"dataset dim {X.n} vs state dim {w0.n}")
    master, (rng,), _ = rng_streams(hp.seed, 1)
    (part,) = partition_points(X.points, 1, master)
    part = part[rng.permutation(len(part))]

    evaluator = Evaluator(X, gt, eval_points, hp.seed)
    ckpt = _checkpoint_every(hp.iterations, trace_points)
    step_s = cost.batch_seconds(hp.b, w0.k, w0.n)

    w = w0
    clock = 0.0
    trace = [TracePoint(0, 0.0, evaluator.quant(w), evaluator.gt_error(w), b=hp.b)]
    for t in range(1, hp.iterations + 1):
        idx = rng.integers(0, len(part), size=hp.b)
        grad = -minibatch_update(part[idx], w)
        w = apply_descent_step(w, grad, hp.epsilon)
        clock = clock + step_s
        if t % ckpt == 0 or t == hp.iterations:
            trace.append(TracePoint(t * hp.b, clock, evaluator.quant(w),
                                    evaluator.gt_error(w), b=hp.b))
    return SolverResult(final_state=w, trace=trace, worker_states=[w])


def simuparallel_sgd(X: Dataset, hp: Hyperparams, w0: ModelState, *, gt=None,
                     cost: CostModel = DEFAULT_COST, trace_points: int = 100,
                     eval_points: int = 2048) -> SolverResult:
    """Embarrassingly parallel mini-batch SGD: workers never talk; the answer
    is the component-wise average of their final states.

    Trace checkpoints score the average of the current worker states, i.e.
    the answer the solver would return if stopped there.
    """
    if hp.workers > X.m:
        raise ValueError(f"cannot run {hp.workers} workers on {X.m} samples")
    if X.n != w0.n:
        raise StateDimensionError(f"dataset dim {X.n} vs state dim {w0.n}")
    master, sample_rngs, _ = rng_streams(hp.seed, hp.workers)
    parts = partition_points(X.points, hp.workers, master)
    parts = [p[r.permutation(len(p))] for p, r in zip(parts, sample_rngs)]

    evaluator = Evaluator(X, gt, eval_points, hp.seed)
    ckpt = _checkpoint_every(hp.iterations, trace_points)
    step_s = cost.batch_seconds(hp.b, w0.k, w0.n)

    def averaged(states):
        return ModelState(np.mean(np.stack([s.centers for s in states]), axis=0))

    states = [w0] * hp.workers
    clock = 0.0
    trace = [TracePoint(0, 0.0, evaluator.quant(w0), evaluator.gt_error(w0), b=hp.b)]
    for t in range(1, hp.iterations + 1):
        for i in range(hp.workers):
            idx = sample_rngs[i].integers(0, len(parts[i]), size=hp.b)
            grad = -minibatch_update(parts[i][idx], states[i])
            states[i] = apply_descent_step(states[i], grad, hp.epsilon)
        clock = clock + step_s  # workers advance in parallel: one step of time
        if t % ckpt == 0 or t == hp.iterations:
            avg = averaged(states)
            trace.append(TracePoint(t * hp.b * hp.workers, clock,
                                    evaluator.quant(avg), evaluator.gt_error(avg),
                                    b=hp.b))
    final = averaged(states)
    return SolverResult(final_state=final, trace=trace, worker_states=states)


def batch_gd(X: Dataset, hp: Hyperparams, w0: ModelState, *, gt=None,
             cost: CostModel = DEFAULT_COST, eval_points: int = 2048) -> SolverResult:
    """Full-dataset gradient descent: one epsilon/m-scaled update per epoch."""
    if X.n != w0.n:
        raise StateDimensionError(f"dataset dim {X.n} vs state dim {w0.n}")
    evaluator = Evaluator(X, gt, eval_points, hp.seed)
    epoch_s = cost.batch_seconds(X.m, w0.k, w0.n)

    w = w0
    clock = 0.0
    trace = [TracePoint(0, 0.0, evaluator.quant(w), evaluator.gt_error(w), b=X.m)]
    for t in range(1, hp.iterations + 1):
        grad = -minibatch_update(X.points, w)
        w = apply_descent_step(w, grad, hp.epsilon / X.m)
        clock = clock + epoch_s
        trace.append(TracePoint(t * X.m, clock, evaluator.quant(w),
                                evaluator.gt_error(w), b=X.m))
    return SolverResult(final_state=w, trace=trace, worker_states=[w])
