"""Asynchronous mini-batch SGD over a one-sided transport.

Workers descend on private partitions of the data and exchange whole model
states through single-slot remote buffers.  An incoming state contributes to
a step only when the acceptance window says the local step already moves
toward it; an accepted state adds a pull term of half the state gap:

    merged = 0.5 * (w_local - w_remote) + gradient      (if accepted)
    w     <- w - epsilon * merged

A rejected or absent message leaves the step bit-identical to plain
mini-batch SGD, which is what collapses the whole engine onto the sequential
baselines in the degenerate configurations.
"""

from __future__ import annotations

import heapq
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .adaptive import ControllerState, controller_tick
from .kmeans import Dataset, minibatch_update
from .model import (Hyperparams, ModelState, StateDimensionError,
                    UpdateMessage, apply_descent_step, serialized_size)
from .results import Evaluator, SolverResult, TracePoint
from .seeding import partition_points, rng_streams
from .transport import (VIRTUAL_TIME, WALL_CLOCK, NetworkModel,
                        VirtualTransport, WallClockTransport)


@dataclass
class WorkerStats:
    messages_sent: int = 0  # post attempts; refusals are counted by the transport
    messages_received: int = 0
    messages_accepted: int = 0


@dataclass(frozen=True)
class CostModel:
    """Virtual compute-time model, in seconds per arithmetic component touch.

    A mini-batch step costs b*k*n component touches plus a fixed overhead;
    polling a message adds ``filter_factor`` state passes (distance tests and
    the merge), posting one adds ``send_factor`` passes (serialization).
    """

    component_seconds: float = 1e-9
    step_overhead_seconds: float = 1e-6
    filter_factor: float = 3.0
    send_factor: float = 1.0

    def batch_seconds(self, b: int, k: int, n: int) -> float:
        return b * k * n * self.component_seconds + self.step_overhead_seconds

    def filter_seconds(self, k: int, n: int) -> float:
        return self.filter_factor * k * n * self.component_seconds

    def send_seconds(self, k: int, n: int) -> float:
        return self.send_factor * k * n * self.component_seconds


DEFAULT_COST = CostModel()


@dataclass
class WorkerState:
    """Mutable per-worker loop state."""

    id: int
    w: ModelState
    partition: np.ndarray
    rng: np.random.Generator  # mini-batch sampling stream
    comm_rng: np.random.Generator  # recipient choices; separate so communication
    # on/off never perturbs the sampling stream
    b: int
    t: int = 0
    clock: float = 0.0
    samples: int = 0
    stats: WorkerStats = field(default_factory=WorkerStats)
    controller: ControllerState | None = None
    q_history: list = field(default_factory=list)


def parzen_accept(w_i: ModelState, w_j: ModelState, step: np.ndarray,
                  epsilon: float) -> bool:
    """True iff the local step lands strictly closer to ``w_j`` than it started.

    ``step`` is the descent-facing gradient: the candidate next state is
    w_i - epsilon * step.
    """
    step = np.asarray(step, dtype=np.float64)
    if w_i.centers.shape != w_j.centers.shape or step.shape != w_i.centers.shape:
        raise StateDimensionError("state and step shapes must all agree")
    post = w_i.centers - epsilon * step
    gap_after = float(np.sum((post - w_j.centers) ** 2))
    gap_before = float(np.sum((w_i.centers - w_j.centers) ** 2))
    return gap_after < gap_before


def merge_update(w_i: ModelState, w_j: ModelState | None, delta_m: np.ndarray,
                 epsilon: float) -> np.ndarray:
    """Blend an external state into the local update, gated by parzen_accept.

    Returns ``delta_m`` untouched (the same array object, so the descent step
    stays bit-identical) when there is no external state or it is rejected;
    otherwise adds the pull term (w_i - w_j) / 2.
    """
    if w_j is None or not parzen_accept(w_i, w_j, delta_m, epsilon):
        return delta_m
    return 0.5 * (w_i.centers - w_j.centers) + delta_m


def _check_filter_contract(w, msg_state, grad, accepted, new_w, epsilon):
    # Re-derives the acceptance inequality and the rejected-path state from
    # scratch; used by the self-check mode only.
    post = w.centers - epsilon * grad
    gap_after = float(np.sum((post - msg_state.centers) ** 2))
    gap_before = float(np.sum((w.centers - msg_state.centers) ** 2))
    if accepted:
        if not gap_after < gap_before:
            raise AssertionError(
                f"accepted message violates the filter: {gap_after} >= {gap_before}"
            )
    else:
        reference = apply_descent_step(w, grad, epsilon)
        if new_w.centers.tobytes() != reference.centers.tobytes():
            raise AssertionError("rejected message altered the step")


def worker_step(ws: WorkerState, hp: Hyperparams, transport, *,
                cost: CostModel | None = None, now: float = 0.0,
                self_check: bool = False) -> WorkerState:
    """One mini-batch step: poll, filter, merge, descend, post, account.

    Mutates and returns ``ws``.  With a ``cost`` model the worker's clock is
    advanced to ``now`` plus the step's virtual duration and the outgoing post
    is stamped with that completion time; without one (wall-clock mode) the
    clock bookkeeping is skipped.
    """
    msg = transport.poll_receive(ws.id) if transport is not None else None
    if msg is not None:
        ws.stats.messages_received += 1

    idx = ws.rng.integers(0, len(ws.partition), size=ws.b)
    batch = ws.partition[idx]
    grad = -minibatch_update(batch, ws.w)  # descent-facing sign

    accepted = msg is not None and parzen_accept(ws.w, msg.state, grad, hp.epsilon)
    if accepted:
        ws.stats.messages_accepted += 1
        merged = merge_update(ws.w, msg.state, grad, hp.epsilon)
    else:
        merged = grad

    new_w = apply_descent_step(ws.w, merged, hp.epsilon)
    if self_check and msg is not None:
        _check_filter_contract(ws.w, msg.state, grad, accepted, new_w, hp.epsilon)

    prev_w = ws.w
    ws.w = new_w
    ws.t += 1
    ws.samples += ws.b

    duration = 0.0
    if cost is not None:
        duration = cost.batch_seconds(ws.b, prev_w.k, prev_w.n)
        if msg is not None:
            duration += cost.filter_seconds(prev_w.k, prev_w.n)

    if transport is not None and hp.workers > 1:
        if cost is not None:
            duration += cost.send_seconds(prev_w.k, prev_w.n)
        pick = int(ws.comm_rng.integers(0, hp.workers - 1))
        dst = pick if pick < ws.id else pick + 1  # uniform over the other workers
        transport.post_send(ws.id, dst, UpdateMessage(ws.w, ws.id, ws.t), now=now + duration)
        ws.stats.messages_sent += 1

    ws.clock = now + duration
    return ws


def _build_workers(X, hp, w0, controller):
    master, sample_rngs, comm_rngs = rng_streams(hp.seed, hp.workers)
    parts = partition_points(X.points, hp.workers, master)
    start_b = controller.b if controller is not None else hp.b
    workers = []
    for i in range(hp.workers):
        rng = sample_rngs[i]
        part = parts[i][rng.permutation(len(parts[i]))]
        workers.append(
            WorkerState(id=i, w=w0, partition=part, rng=rng, comm_rng=comm_rngs[i],
                        b=start_b, controller=controller)
        )
    return workers


def _trace_point(workers, observer, evaluator, msg_totals=True) -> TracePoint:
    ws = workers[observer]
    return TracePoint(
        samples=sum(w.samples for w in workers),
        time_s=ws.clock,
        quant_error=evaluator.quant(ws.w),
        gt_error=evaluator.gt_error(ws.w),
        msgs_sent=sum(w.stats.messages_sent for w in workers),
        msgs_accepted=sum(w.stats.messages_accepted for w in workers),
        b=ws.b,
    )


def _result(workers, trace, transport) -> SolverResult:
    return SolverResult(
        final_state=workers[0].w,
        trace=trace,
        worker_states=[w.w for w in workers],
        worker_stats=[w.stats for w in workers],
        transport=list(transport.stats) if transport is not None else None,
        controller_q=[list(w.q_history) for w in workers],
        overwrites=[b.overwrite_count for b in transport.buffers]
        if isinstance(transport, VirtualTransport) else None,
    )


def run_asgd(X: Dataset, hp: Hyperparams, w0: ModelState,
             net: NetworkModel | None, controller: ControllerState | None = None,
             *, gt=None, cost: CostModel = DEFAULT_COST, trace_points: int = 100,
             eval_points: int = 2048, self_check: bool = False) -> SolverResult:
    """Run the asynchronous optimization and return worker 0's state.

    ``net=None`` disables communication entirely, which reduces the run to
    independent per-worker mini-batch SGD (the infinite-communication-interval
    degeneracy).  Virtual-time mode is fully deterministic in ``hp.seed``;
    wall-clock mode uses one thread per worker and makes no replay promises.
    """
    if hp.workers > X.m:
        raise ValueError(f"cannot run {hp.workers} workers on {X.m} samples")
    if X.n != w0.n:
        raise StateDimensionError(f"dataset dim {X.n} vs state dim {w0.n}")
    if net is not None and net.mode == WALL_CLOCK:
        return _run_wall_clock(X, hp, w0, net, controller, gt=gt,
                               trace_points=trace_points, eval_points=eval_points,
                               self_check=self_check)

    workers = _build_workers(X, hp, w0, controller)
    transport = None
    if net is not None:
        transport = VirtualTransport(net, hp.workers, serialized_size(w0.k, w0.n),
                                     validate=self_check)

    evaluator = Evaluator(X, gt, eval_points, hp.seed)
    ckpt = max(1, hp.iterations // trace_points)
    trace = [_trace_point(workers, 0, evaluator)]
    if hp.iterations == 0:
        return _result(workers, trace, transport)

    heap = [(0.0, i) for i in range(hp.workers)]
    heapq.heapify(heap)
    while heap:
        now, i = heapq.heappop(heap)
        ws = workers[i]
        if transport is not None:
            transport.advance(now)
        worker_step(ws, hp, transport, cost=cost, now=now, self_check=self_check)
        if ws.controller is not None and ws.t % ws.controller.interval == 0:
            ws.controller = controller_tick(ws, ws.controller, transport)
        if i == 0 and (ws.t % ckpt == 0 or ws.t == hp.iterations):
            trace.append(_trace_point(workers, 0, evaluator))
        if ws.t < hp.iterations:
            heapq.heappush(heap, (ws.clock, i))

    return _result(workers, trace, transport)


def _run_wall_clock(X, hp, w0, net, controller, *, gt, trace_points, eval_points,
                    self_check):
    workers = _build_workers(X, hp, w0, controller)
    transport = None
    if hp.workers > 1:
        transport = WallClockTransport(net, hp.workers, serialized_size(w0.k, w0.n))

    evaluator = Evaluator(X, gt, eval_points, hp.seed)
    ckpt = max(1, hp.iterations // trace_points)
    trace = [_trace_point(workers, 0, evaluator)]
    if hp.iterations == 0:
        return _result(workers, trace, transport)

    start = time.monotonic()
    gate = threading.Barrier(hp.workers)
    failures = []

    def loop(ws: WorkerState) -> None:
        try:
            gate.wait()
            for _ in range(hp.iterations):
                worker_step(ws, hp, transport, cost=None, self_check=self_check)
                if ws.controller is not None and ws.t % ws.controller.interval == 0:
                    ws.controller = controller_tick(ws, ws.controller, transport)
                if ws.id == 0 and (ws.t % ckpt == 0 or ws.t == hp.iterations):
                    ws.clock = time.monotonic() - start
                    trace.append(_trace_point(workers, 0, evaluator))
        except Exception as exc:  # surfaced after join; threads must not die silently
            failures.append(exc)

    threads = [threading.Thread(target=loop, args=(w,)) for w in workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if transport is not None:
        transport.close()
    if failures:
        raise failures[0]

    result = _result(workers, trace, transport)
    if isinstance(transport, WallClockTransport):
        result.overwrites = list(transport.overwrites)
    return result
