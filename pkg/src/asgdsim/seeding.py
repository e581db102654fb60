"""Deterministic RNG-stream and data-partition discipline shared by all solvers.

Every solver derives the same structures from (seed, workers): one master
stream that shuffles and splits the data, then per worker a sampling stream
(mini-batch draws) and a separate communication stream (recipient choices).
Keeping the two per-worker streams apart means enabling or disabling
communication never perturbs which samples a worker sees, which is what makes
the degeneracy identities exact.
"""

from __future__ import annotations

import numpy as np

from .kmeans import Dataset
from .model import ModelState

_INIT_TAG = 0x573030  # initial-state stream namespace
_EVAL_TAG = 0x4556A1  # evaluation-subsample stream namespace


def rng_streams(seed: int, workers: int):
    """Master stream plus one (sampling, communication) pair per worker."""
    children = np.random.SeedSequence(seed).spawn(1 + 2 * workers)
    master = np.random.default_rng(children[0])
    sampling = [np.random.default_rng(children[1 + 2 * i]) for i in range(workers)]
    comm = [np.random.default_rng(children[2 + 2 * i]) for i in range(workers)]
    return master, sampling, comm


def partition_points(points: np.ndarray, workers: int, master_rng) -> list:
    """Random even split of the rows; the last worker absorbs the remainder."""
    m = len(points)
    if workers > m:
        raise ValueError(f"cannot split {m} samples across {workers} workers")
    shuffled = points[master_rng.permutation(m)]
    h = m // workers
    parts = [shuffled[i * h : (i + 1) * h] for i in range(workers - 1)]
    parts.append(shuffled[(workers - 1) * h :])
    return parts


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, _INIT_TAG)))


def eval_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, _EVAL_TAG)))


def initial_state(X: Dataset, k: int, seed: int = 0, *, rng=None,
                  zeros: bool = False) -> ModelState:
    """Shared starting state: k distinct samples from X, or all zeros.

    The zeros variant reproduces the degenerate start where every prototype
    sits at the origin; sampling from the data is the default because it is
    scale-free and keeps every prototype inside the populated region.
    """
    if zeros:
        return ModelState(np.zeros((k, X.n)))
    if k > X.m:
        raise ValueError(f"cannot draw {k} distinct samples from {X.m} points")
    if rng is None:
        rng = init_rng(seed)
    idx = rng.choice(X.m, size=k, replace=False)
    return ModelState(X.points[idx])
