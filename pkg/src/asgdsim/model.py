"""Core numeric types: model states, solver knobs, and the wire encoding.

A model state is the full parameter set of the optimization problem, k
prototype vectors in R^n, and is the unit that workers exchange and
serialize.  States are immutable; every update produces a new object, so a
state captured in a message can never change underneath the receiver.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_WIRE_HEADER = struct.Struct("<QQ")  # k, n as little-endian uint64


class StateDimensionError(ValueError):
    """Two states (or a state and a point) have incompatible shapes."""


@dataclass(frozen=True, eq=False)
class ModelState:
    """k prototype vectors of dimension n, stored row-major and read-only."""

    centers: np.ndarray

    def __post_init__(self):
        arr = np.array(self.centers, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise ValueError(f"centers must be 2-D (k, n), got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("centers must hold at least one component")
        if not np.isfinite(arr).all():
            raise ValueError("model state contains non-finite components")
        arr.setflags(write=False)
        object.__setattr__(self, "centers", arr)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def n(self) -> int:
        return self.centers.shape[1]

    @classmethod
    def from_flat(cls, values, k: int, n: int) -> "ModelState":
        flat = np.asarray(values, dtype=np.float64).reshape(-1)
        if flat.size != k * n:
            raise ValueError(f"expected {k * n} components, got {flat.size}")
        return cls(flat.reshape(k, n))


@dataclass(frozen=True)
class Hyperparams:
    """Solver knobs shared by every optimizer in the package.

    ``b`` is the mini-batch size per step, ``iterations`` the number of
    mini-batch steps each worker performs.  ``iterations=0`` is allowed so
    callers can probe the run scaffolding without moving the state.
    """

    epsilon: float
    b: int = 1
    iterations: int = 100
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.b < 1:
            raise ValueError("b must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass(frozen=True, eq=False)
class UpdateMessage:
    """A model state in flight: payload plus sender id and sender-local step."""

    state: ModelState
    sender: int
    sender_iteration: int

    def __post_init__(self):
        if self.sender < 0:
            raise ValueError("sender must be a non-negative worker id")
        if self.sender_iteration < 0:
            raise ValueError("sender_iteration must be >= 0")


def distance_sq(a: ModelState, b: ModelState) -> float:
    """Squared Euclidean distance between two states over all components."""
    if a.centers.shape != b.centers.shape:
        raise StateDimensionError(
            f"incompatible states: {a.centers.shape} vs {b.centers.shape}"
        )
    diff = a.centers - b.centers
    return float(np.sum(diff * diff))


def serialized_size(k: int, n: int) -> int:
    """Exact byte length of the wire encoding of a k-by-n state."""
    return _WIRE_HEADER.size + 8 * k * n


def serialize_state(s: ModelState) -> bytes:
    """Encode as <uint64 k><uint64 n> followed by k*n float64, little-endian."""
    return _WIRE_HEADER.pack(s.k, s.n) + s.centers.astype("<f8", copy=False).tobytes()


def deserialize_state(buf: bytes) -> ModelState:
    """Inverse of :func:`serialize_state`; rejects truncated or padded buffers."""
    if len(buf) < _WIRE_HEADER.size:
        raise ValueError("buffer shorter than the state header")
    k, n = _WIRE_HEADER.unpack_from(buf)
    expected = serialized_size(k, n)
    if len(buf) != expected:
        raise ValueError(
            f"expected {expected} bytes for a {k}x{n} state, got {len(buf)}"
        )
    flat = np.frombuffer(buf, dtype="<f8", count=k * n, offset=_WIRE_HEADER.size)
    return ModelState(flat.reshape(k, n))


def apply_descent_step(w: ModelState, gradient: np.ndarray, epsilon: float) -> ModelState:
    """One descent application, w <- w - epsilon * gradient.

    The gradient must match the state shape exactly; broadcasting a row
    vector over every prototype would be a silent bug.
    """
    gradient = np.asarray(gradient)
    if gradient.shape != w.centers.shape:
        raise StateDimensionError(
            f"gradient shape {gradient.shape} vs state shape {w.centers.shape}"
        )
    return ModelState(w.centers - epsilon * gradient)
