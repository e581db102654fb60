"""Synthetic benchmark data: well-separated isotropic Gaussian blobs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kmeans import Dataset, GroundTruth

# Rejection-sampling budget per requested center before giving up.
_ATTEMPTS_PER_CENTER = 1000


class PlacementError(RuntimeError):
    """Center placement could not satisfy the separation constraint."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic clustering problem.

    ``cluster_sigma`` may be a single float or one value per cluster.  Centers
    are drawn uniformly from the hypercube [-box, box]^n and re-drawn until
    all pairwise distances reach ``min_center_dist``.
    """

    n: int
    m: int
    k: int
    min_center_dist: float = 0.0
    cluster_sigma: float | tuple = 1.0
    box: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.k < 1:
            raise ValueError("n, m, and k must all be >= 1")
        if self.min_center_dist < 0:
            raise ValueError("min_center_dist must be >= 0")
        if self.box <= 0:
            raise ValueError("box must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        sigmas = self.sigmas()
        if len(sigmas) != self.k:
            raise ValueError(f"need one sigma per cluster, got {len(sigmas)} for k={self.k}")
        if any(s <= 0 for s in sigmas):
            raise ValueError("cluster_sigma values must be > 0")

    def sigmas(self) -> tuple:
        if np.isscalar(self.cluster_sigma):
            return (float(self.cluster_sigma),) * self.k
        return tuple(float(s) for s in self.cluster_sigma)


def _place_centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((spec.k, spec.n))
    placed = 0
    budget = _ATTEMPTS_PER_CENTER * spec.k
    while placed < spec.k:
        if budget == 0:
            raise PlacementError(
                f"could not place {spec.k} centers with min_center_dist="
                f"{spec.min_center_dist} inside [-{spec.box}, {spec.box}]^{spec.n}; "
                "loosen the separation or enlarge the box"
            )
        budget -= 1
        cand = rng.uniform(-spec.box, spec.box, size=spec.n)
        if placed:
            gaps = np.linalg.norm(centers[:placed] - cand, axis=1)
            if gaps.min() < spec.min_center_dist:
                continue
        centers[placed] = cand
        placed += 1
    return centers


def generate(spec: SyntheticSpec) -> tuple[Dataset, GroundTruth]:
    """Draw the dataset described by ``spec``.  Deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    centers = _place_centers(spec, rng)
    labels = rng.integers(0, spec.k, size=spec.m)
    sigmas = np.asarray(spec.sigmas())
    noise = rng.standard_normal((spec.m, spec.n)) * sigmas[labels, None]
    points = centers[labels] + noise
    return Dataset(points), GroundTruth(centers)
