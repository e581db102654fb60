"""One-sided transport emulation: remote write slots behind per-node egress
queues with a bandwidth/latency delivery model.

Each node owns a bounded FIFO egress queue drained at the link bandwidth (one
message at a time, ``message_size / bandwidth`` seconds each) and every worker
exposes a single receive slot where a newly delivered state overwrites any
unread one.  Posting never blocks: a full queue refuses the message, and the
refusal is a return value rather than an error.

Virtual-time mode precomputes every delivery instant at post time, which the
FIFO discipline makes exact, and applies deliveries when the scheduler
advances the clock.  Wall-clock mode moves the same messages with real
threads and sleeps.
"""

from __future__ import annotations

import heapq
import itertools
import queue as queue_mod
import threading
import time
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelState, UpdateMessage

VIRTUAL_TIME = "virtual-time"
WALL_CLOCK = "wall-clock"


@dataclass(frozen=True)
class NetworkModel:
    bandwidth: float  # bytes per second of per-node egress
    latency: float  # seconds added to every delivery
    queue_capacity: int = 64  # max messages pending per egress queue
    mode: str = VIRTUAL_TIME
    torn_writes: bool = False  # test mode: overwrites splice half-old, half-new states

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.mode not in (VIRTUAL_TIME, WALL_CLOCK):
            raise ValueError(f"mode must be {VIRTUAL_TIME!r} or {WALL_CLOCK!r}")


# Plausible figures for an FDR-class fabric and switched gigabit links; both
# are freely overridable per run.
PRESETS = {
    "infiniband": NetworkModel(bandwidth=6.8e9, latency=1e-6),
    "ethernet": NetworkModel(bandwidth=1.25e8, latency=50e-6),
}


def network_preset(name: str, **overrides) -> NetworkModel:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown network preset {name!r}; available: {sorted(PRESETS)}")
    return replace(base, **overrides) if overrides else base


@dataclass
class RemoteBuffer:
    """Single receive slot: the newest delivery wins."""

    slot: UpdateMessage | None = None
    overwrite_count: int = 0


@dataclass
class NodeStats:
    """Egress accounting for one node.  posted = refused + delivered + pending."""

    posted: int = 0
    refused: int = 0
    delivered: int = 0  # messages from this node written into a remote slot
    delivered_bytes: int = 0

    @property
    def pending(self) -> int:
        return self.posted - self.refused - self.delivered


def _splice(old: UpdateMessage, new: UpdateMessage) -> UpdateMessage:
    """Torn write: first half of the unread state, second half of the new one."""
    a = old.state.centers.reshape(-1)
    b = new.state.centers.reshape(-1)
    half = a.size // 2
    mixed = np.concatenate([a[:half], b[half:]])
    state = ModelState.from_flat(mixed, new.state.k, new.state.n)
    return UpdateMessage(state, new.sender, new.sender_iteration)


class VirtualTransport:
    """Deterministic discrete-event realization of the delivery model."""

    def __init__(self, net: NetworkModel, n_workers: int, message_size: int,
                 validate: bool = False):
        if net.mode != VIRTUAL_TIME:
            raise ValueError("VirtualTransport requires a virtual-time NetworkModel")
        if n_workers < 1:
            raise ValueError("need at least one worker")
        if message_size < 1:
            raise ValueError("message_size must be >= 1 byte")
        self.net = net
        self.n_workers = n_workers
        self.message_size = message_size
        self.validate = validate
        self.clock = 0.0
        self.buffers = [RemoteBuffer() for _ in range(n_workers)]
        self.stats = [NodeStats() for _ in range(n_workers)]
        self._queues = [deque() for _ in range(n_workers)]  # (enqueue_t, serialize_end)
        self._server_free = [0.0] * n_workers
        self._events = []  # (delivery_time, seq, src, dst, msg)
        self._seq = itertools.count()

    def occupancy(self, node: int, now: float) -> int:
        """Messages sitting in ``node``'s egress queue at time ``now``."""
        return sum(1 for enq, done in self._queues[node] if enq <= now < done)

    def queue_size(self, node: int) -> int:
        return self.occupancy(node, self.clock)

    def post_send(self, src: int, dst: int, msg: UpdateMessage, now: float) -> bool:
        """Non-blocking post.  Returns False when the egress queue is full."""
        if src == dst:
            raise ValueError("a node cannot send to itself")
        if not (0 <= src < self.n_workers and 0 <= dst < self.n_workers):
            raise ValueError(f"worker id out of range: src={src} dst={dst}")
        st = self.stats[src]
        st.posted += 1
        if self.occupancy(src, now) >= self.net.queue_capacity:
            st.refused += 1
            return False
        start = max(now, self._server_free[src])
        done = start + self.message_size / self.net.bandwidth
        self._server_free[src] = done
        self._queues[src].append((now, done))
        heapq.heappush(self._events, (done + self.net.latency, next(self._seq), src, dst, msg))
        return True

    def poll_receive(self, worker: int) -> UpdateMessage | None:
        buf = self.buffers[worker]
        msg, buf.slot = buf.slot, None
        return msg

    def advance(self, now: float) -> int:
        """Apply every delivery due at or before ``now``; returns how many."""
        if now < self.clock:
            raise ValueError(f"time regression: advance({now}) after clock={self.clock}")
        self.clock = now
        delivered = 0
        while self._events and self._events[0][0] <= now:
            _, _, src, dst, msg = heapq.heappop(self._events)
            self._deliver(src, dst, msg)
            delivered += 1
        for q in self._queues:
            while q and q[0][1] <= now:
                q.popleft()
        if self.validate:
            self.check_conservation()
        return delivered

    def _deliver(self, src: int, dst: int, msg: UpdateMessage) -> None:
        buf = self.buffers[dst]
        if buf.slot is not None:
            if self.net.torn_writes:
                msg = _splice(buf.slot, msg)
            buf.overwrite_count += 1
        buf.slot = msg
        st = self.stats[src]
        st.delivered += 1
        st.delivered_bytes += self.message_size

    def in_flight(self, node: int) -> int:
        """Accepted messages from ``node`` not yet written to their slot."""
        return sum(1 for ev in self._events if ev[2] == node)

    def check_conservation(self) -> None:
        """posted = refused + delivered + pending, with pending backed by the
        event heap; delivered egress bytes never exceed bandwidth * clock plus
        one in-progress message."""
        byte_cap = self.net.bandwidth * self.clock + self.message_size
        for node, st in enumerate(self.stats):
            if st.pending != self.in_flight(node):
                raise AssertionError(
                    f"node {node}: pending={st.pending} but {self.in_flight(node)} in flight"
                )
            if st.posted != st.refused + st.delivered + st.pending:
                raise AssertionError(f"node {node}: message conservation violated")
            if st.delivered_bytes > byte_cap + 1e-9:
                raise AssertionError(
                    f"node {node}: {st.delivered_bytes} B delivered exceeds "
                    f"bandwidth cap {byte_cap:.1f} B at t={self.clock}"
                )


class WallClockTransport:
    """Thread-backed variant: per-node drainer threads move messages with real
    sleeps sized by the same bandwidth/latency parameters.

    Producers and the consumer never block: posting uses put_nowait, receive
    slots are deque(maxlen=1) so delivery overwrites unread states, and polls
    pop without locks.  Overwrite counts are best-effort under concurrency.
    """

    _POLL_S = 0.02

    def __init__(self, net: NetworkModel, n_workers: int, message_size: int):
        if net.mode != WALL_CLOCK:
            raise ValueError("WallClockTransport requires a wall-clock NetworkModel")
        self.net = net
        self.n_workers = n_workers
        self.message_size = message_size
        self.stats = [NodeStats() for _ in range(n_workers)]
        self.overwrites = [0] * n_workers
        self._slots = [deque(maxlen=1) for _ in range(n_workers)]
        self._queues = [queue_mod.Queue(maxsize=net.queue_capacity) for _ in range(n_workers)]
        self._stop = threading.Event()
        self._drainers = [
            threading.Thread(target=self._drain, args=(i,), daemon=True)
            for i in range(n_workers)
        ]
        for t in self._drainers:
            t.start()

    def _drain(self, node: int) -> None:
        delay = self.message_size / self.net.bandwidth + self.net.latency
        while not self._stop.is_set():
            try:
                dst, msg = self._queues[node].get(timeout=self._POLL_S)
            except queue_mod.Empty:
                continue
            time.sleep(delay)
            slot = self._slots[dst]
            if slot:  # unread previous state is about to be overwritten
                self.overwrites[dst] += 1
            slot.append(msg)
            st = self.stats[node]
            st.delivered += 1
            st.delivered_bytes += self.message_size

    def post_send(self, src: int, dst: int, msg: UpdateMessage, now: float = 0.0) -> bool:
        if src == dst:
            raise ValueError("a node cannot send to itself")
        st = self.stats[src]
        st.posted += 1
        try:
            self._queues[src].put_nowait((dst, msg))
        except queue_mod.Full:
            st.refused += 1
            return False
        return True

    def poll_receive(self, worker: int) -> UpdateMessage | None:
        try:
            return self._slots[worker].popleft()
        except IndexError:
            return None

    def queue_size(self, node: int) -> int:
        return self._queues[node].qsize()

    def advance(self, now: float) -> int:
        raise RuntimeError("advance() is only meaningful in virtual-time mode")

    def close(self) -> None:
        self._stop.set()
        for t in self._drainers:
            t.join()
