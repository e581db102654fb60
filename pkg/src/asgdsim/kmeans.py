"""K-Means quantization objective, its stochastic updates, and dataset files.

The objective is E(w) = sum_i 0.5 * ||x_i - w_{s_i}||^2 with s_i the index of
the prototype nearest to x_i.  ``point_update`` is the per-sample update
direction (x - w_k) on the winning row; note this is the *negative* partial
derivative of E, so plain descent applies it with a plus sign.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ModelState, StateDimensionError

DATASET_MAGIC = 0x4B4D44
GROUND_TRUTH_MAGIC = 0x4B4D43
_FILE_HEADER = struct.Struct("<QQQ")  # magic, rows, cols — little-endian uint64

# Row-chunk budget for pairwise-distance loops, sized to keep the
# (rows, k, n) scratch buffer around 32 MB.
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sample matrix, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        arr = np.array(self.points, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise ValueError(f"points must be 2-D (m, n), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("dataset must hold at least one point of dimension >= 1")
        if not np.isfinite(arr).all():
            raise ValueError("dataset contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """The centers that generated a synthetic dataset."""

    true_centers: np.ndarray

    def __post_init__(self):
        arr = np.array(self.true_centers, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("true_centers must be a non-empty 2-D matrix")
        if not np.isfinite(arr).all():
            raise ValueError("ground truth contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "true_centers", arr)

    @property
    def k(self) -> int:
        return self.true_centers.shape[0]

    @property
    def n(self) -> int:
        return self.true_centers.shape[1]


def _chunk_rows(k: int, n: int) -> int:
    return max(1, _CHUNK_BUDGET // max(1, k * n))


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # Direct subtraction keeps single-point and batched assignment on the
    # same floating-point path, so tie behavior cannot diverge between them.
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ikn,ikn->ik", diff, diff)


def assign(x, w: ModelState) -> int:
    """Index of the nearest prototype; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (w.n,):
        raise StateDimensionError(f"point of shape {x.shape} vs state dim {w.n}")
    return int(np.argmin(_sq_dists(x[None, :], w.centers)[0]))


def assign_many(points, w: ModelState) -> np.ndarray:
    """Nearest-prototype index for every row of ``points``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != w.n:
        raise StateDimensionError(f"points of shape {pts.shape} vs state dim {w.n}")
    out = np.empty(len(pts), dtype=np.int64)
    step = _chunk_rows(w.k, w.n)
    for lo in range(0, len(pts), step):
        chunk = pts[lo : lo + step]
        out[lo : lo + len(chunk)] = np.argmin(_sq_dists(chunk, w.centers), axis=1)
    return out


def quantization_error(X: Dataset, w: ModelState) -> float:
    """E(w): half the summed squared distance of each point to its winner."""
    if X.n != w.n:
        raise StateDimensionError(f"dataset dim {X.n} vs state dim {w.n}")
    total = 0.0
    step = _chunk_rows(w.k, w.n)
    for lo in range(0, X.m, step):
        chunk = X.points[lo : lo + step]
        total += float(np.min(_sq_dists(chunk, w.centers), axis=1).sum())
    return 0.5 * total


def point_update(x, w: ModelState) -> np.ndarray:
    """Single-sample update: (x - w_k) on the winning row k, zero elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    idx = assign(x, w)
    out = np.zeros_like(w.centers)
    out[idx] = x - w.centers[idx]
    return out


def minibatch_update(batch, w: ModelState) -> np.ndarray:
    """Sum of point updates over a batch, every point assigned against the
    same incoming ``w`` (assignments are not recomputed mid-batch)."""
    pts = np.asarray(batch, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if len(pts) == 0:
        raise ValueError("mini-batch must hold at least one point")
    idx = assign_many(pts, w)
    out = np.zeros_like(w.centers)
    np.add.at(out, idx, pts - w.centers[idx])
    return out


def ground_truth_error(w: ModelState, gt: GroundTruth) -> float:
    """Mean squared distance between learned and generating centers under the
    optimal one-to-one matching."""
    if w.k != gt.k or w.n != gt.n:
        raise StateDimensionError(
            f"state is {w.k}x{w.n} but ground truth is {gt.k}x{gt.n}"
        )
    cost = _sq_dists(w.centers, gt.true_centers)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _save_matrix(path, magic: int, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(_FILE_HEADER.pack(magic, arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f8", copy=False).tobytes())


def _load_matrix(path, magic: int, what: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _FILE_HEADER.size:
        raise ValueError(f"{path}: too short to be a {what} file")
    found, rows, cols = _FILE_HEADER.unpack_from(raw)
    if found != magic:
        raise ValueError(
            f"{path}: bad magic 0x{found:X}, expected 0x{magic:X} for a {what} file"
        )
    expected = _FILE_HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_FILE_HEADER.size)
    return flat.reshape(rows, cols)


def save_dataset(path, ds: Dataset) -> None:
    _save_matrix(path, DATASET_MAGIC, ds.points)


def load_dataset(path) -> Dataset:
    return Dataset(_load_matrix(path, DATASET_MAGIC, "dataset"))


def save_ground_truth(path, gt: GroundTruth) -> None:
    _save_matrix(path, GROUND_TRUTH_MAGIC, gt.true_centers)


def load_ground_truth(path) -> GroundTruth:
    return GroundTruth(_load_matrix(path, GROUND_TRUTH_MAGIC, "ground-truth"))
