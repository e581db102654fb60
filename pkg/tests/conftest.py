import numpy as np
import pytest

from asgdsim.datagen import SyntheticSpec, generate
from asgdsim.model import ModelState
from asgdsim.seeding import initial_state


@pytest.fixture
def small_problem():
    """A well-separated 3-cluster problem that every solver cracks quickly."""
    X, gt = generate(SyntheticSpec(n=4, m=2400, k=3, min_center_dist=6.0,
                                   cluster_sigma=0.8, box=10.0, seed=42))
    w0 = initial_state(X, 3, seed=7)
    return X, gt, w0


def random_state(rng, k, n, scale=5.0) -> ModelState:
    return ModelState(rng.normal(0.0, scale, size=(k, n)))
