"""Feedback controller that retunes the mini-batch size from egress-queue depth.

Each node runs its own controller.  Every ``interval`` steps it reads the
node's current egress occupancy q0 and nudges b against the gap between the
target occupancy and the occupancy two readings ago, so a starved queue
shrinks b (more frequent messages) and a flooded queue grows it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ControllerState:
    """Controller parameters plus its two-reading occupancy history."""

    q_opt: int
    gamma: float
    b: int
    q1: int = 0
    q2: int = 0
    b_min: int = 8
    b_max: int = 100_000
    interval: int = 10

    def __post_init__(self):
        if self.q_opt < 0:
            raise ValueError("q_opt must be >= 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.b_min < 1 or self.b_max < self.b_min:
            raise ValueError("need 1 <= b_min <= b_max")
        if not self.b_min <= self.b <= self.b_max:
            raise ValueError(f"b={self.b} outside [{self.b_min}, {self.b_max}]")
        if self.q1 < 0 or self.q2 < 0:
            raise ValueError("occupancy history must be >= 0")
        if self.interval < 1:
            raise ValueError("interval must be >= 1")


def adapt(cs: ControllerState, q0: int) -> ControllerState:
    """One controller update from the current queue depth ``q0``.

    The drive term is (q_opt - q0) - (q2 - q0); the q0 contributions cancel
    algebraically, so the applied change depends only on q_opt - q2.  The
    two-term form is kept on purpose.
    """
    if q0 < 0:
        raise ValueError("queue occupancy cannot be negative")
    dq = (cs.q_opt - q0) - (cs.q2 - q0)
    b = int(round(cs.b - dq * cs.gamma))
    b = min(max(b, cs.b_min), cs.b_max)
    return replace(cs, b=b, q2=cs.q1, q1=q0)


def controller_tick(ws, cs: ControllerState, transport) -> ControllerState:
    """Read the worker's egress depth, adapt b, and publish it to the worker.

    ``transport`` may be None (communication disabled), in which case the
    queue reads as permanently empty.
    """
    q0 = transport.queue_size(ws.id) if transport is not None else 0
    out = adapt(cs, q0)
    ws.b = out.b
    ws.q_history.append(q0)
    return out


def default_controller(b: int, queue_capacity: int, interval: int = 10,
                       gamma: float | None = None, q_opt: int | None = None,
                       b_min: int = 8, b_max: int = 100_000) -> ControllerState:
    """Controller preset: target half the queue, gain scaled to the initial b."""
    if q_opt is None:
        q_opt = queue_capacity // 2
    if gamma is None:
        gamma = 0.1 * b / max(1, q_opt)
    return ControllerState(q_opt=q_opt, gamma=gamma, b=b, b_min=b_min,
                           b_max=b_max, interval=interval)
