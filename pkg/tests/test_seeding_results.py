import math

import numpy as np
import pytest

from asgdsim.kmeans import Dataset, GroundTruth, quantization_error
from asgdsim.model import ModelState
from asgdsim.results import Evaluator, SolverResult, TracePoint, runtime_to_target
from asgdsim.seeding import (
    eval_rng,
    init_rng,
    initial_state,
    partition_points,
    rng_streams,
)


class TestRngStreams:
    def test_deterministic_and_distinct(self):
        _, samp_a, comm_a = rng_streams(7, 3)
        _, samp_b, comm_b = rng_streams(7, 3)
        for a, b in zip(samp_a + comm_a, samp_b + comm_b):
            assert a.integers(0, 1 << 30, size=4).tolist() == \
                b.integers(0, 1 << 30, size=4).tolist()
        draws = [tuple(r.integers(0, 1 << 30, size=4)) for r in samp_a + comm_a]
        assert len(set(draws)) == len(draws)

    def test_sampling_streams_stable_under_worker_count_prefix(self):
        # Worker i's streams depend only on (seed, i), so the same worker
        # index draws identically no matter how many peers exist.
        _, samp3, comm3 = rng_streams(5, 3)
        _, samp5, comm5 = rng_streams(5, 5)
        for i in range(3):
            assert samp3[i].integers(0, 1 << 30, size=8).tolist() == \
                samp5[i].integers(0, 1 << 30, size=8).tolist()
            assert comm3[i].integers(0, 1 << 30, size=8).tolist() == \
                comm5[i].integers(0, 1 << 30, size=8).tolist()

    def test_init_and_eval_streams_differ_from_each_other(self):
        a = init_rng(3).integers(0, 1 << 30, size=6).tolist()
        b = eval_rng(3).integers(0, 1 << 30, size=6).tolist()
        assert a != b


class TestPartition:
    def test_covers_all_points_once(self):
        pts = np.arange(23, dtype=np.float64).reshape(-1, 1)
        master, _, _ = rng_streams(0, 4)
        parts = partition_points(pts, 4, master)
        assert [len(p) for p in parts] == [5, 5, 5, 8]
        merged = np.sort(np.concatenate(parts).ravel())
        assert np.array_equal(merged, pts.ravel())

    def test_deterministic_in_master_stream(self):
        pts = np.arange(40, dtype=np.float64).reshape(-1, 2)
        a = partition_points(pts, 3, rng_streams(9, 3)[0])
        b = partition_points(pts, 3, rng_streams(9, 3)[0])
        for pa, pb in zip(a, b):
            assert pa.tobytes() == pb.tobytes()

    def test_more_workers_than_points_raises(self):
        pts = np.zeros((3, 2))
        master, _, _ = rng_streams(0, 5)
        with pytest.raises(ValueError):
            partition_points(pts, 5, master)


class TestInitialState:
    def test_samples_distinct_rows_from_data(self):
        X = Dataset(np.arange(40, dtype=np.float64).reshape(20, 2))
        w = initial_state(X, 5, seed=3)
        rows = {tuple(r) for r in w.centers}
        data_rows = {tuple(r) for r in X.points}
        assert len(rows) == 5
        assert rows <= data_rows

    def test_deterministic_per_seed(self):
        X = Dataset(np.random.default_rng(0).normal(size=(50, 3)))
        a = initial_state(X, 4, seed=11)
        b = initial_state(X, 4, seed=11)
        c = initial_state(X, 4, seed=12)
        assert a.centers.tobytes() == b.centers.tobytes()
        assert a.centers.tobytes() != c.centers.tobytes()

    def test_zeros_variant(self):
        X = Dataset(np.ones((6, 3)))
        w = initial_state(X, 2, zeros=True)
        assert not w.centers.any()

    def test_k_larger_than_m_raises(self):
        X = Dataset(np.ones((3, 2)))
        with pytest.raises(ValueError):
            initial_state(X, 4)


class TestEvaluator:
    def test_exact_when_data_fits(self):
        rng = np.random.default_rng(2)
        X = Dataset(rng.normal(size=(100, 3)))
        w = ModelState(rng.normal(size=(4, 3)))
        ev = Evaluator(X, None, eval_points=100, seed=0)
        assert ev.quant(w) == quantization_error(X, w)

    def test_subsample_is_deterministic_and_scaled(self):
        rng = np.random.default_rng(3)
        X = Dataset(rng.normal(size=(1000, 3)))
        w = ModelState(rng.normal(size=(4, 3)))
        a = Evaluator(X, None, eval_points=64, seed=5).quant(w)
        b = Evaluator(X, None, eval_points=64, seed=5).quant(w)
        assert a == b
        exact = quantization_error(X, w)
        assert a == pytest.approx(exact, rel=0.5)

    def test_subsample_estimate_is_unbiased(self):
        rng = np.random.default_rng(4)
        X = Dataset(rng.normal(size=(500, 2)))
        w = ModelState(rng.normal(size=(3, 2)))
        exact = quantization_error(X, w)
        estimates = [Evaluator(X, None, eval_points=50, seed=s).quant(w)
                     for s in range(300)]
        assert np.mean(estimates) == pytest.approx(exact, rel=0.05)

    def test_gt_error_nan_without_ground_truth(self):
        X = Dataset(np.ones((10, 2)))
        ev = Evaluator(X, None, eval_points=10, seed=0)
        assert math.isnan(ev.gt_error(ModelState(np.ones((2, 2)))))

    def test_gt_error_exact_with_ground_truth(self):
        X = Dataset(np.ones((10, 2)))
        gt = GroundTruth(np.array([[0.0, 0.0], [2.0, 0.0]]))
        ev = Evaluator(X, gt, eval_points=10, seed=0)
        w = ModelState(np.array([[2.0, 0.0], [0.0, 1.0]]))
        assert ev.gt_error(w) == pytest.approx((0.0 + 1.0) / 2)


def _trace(times, gts):
    return [TracePoint(samples=i, time_s=t, quant_error=0.0, gt_error=g)
            for i, (t, g) in enumerate(zip(times, gts))]


class TestRuntimeToTarget:
    def test_first_crossing_time(self):
        trace = _trace([0.0, 1.0, 2.0, 3.0], [9.0, 5.0, 1.0, 0.5])
        assert runtime_to_target(trace, 5.0) == 1.0
        assert runtime_to_target(trace, 0.9) == 3.0

    def test_unreached_is_inf(self):
        trace = _trace([0.0, 1.0], [9.0, 5.0])
        assert runtime_to_target(trace, 0.1) == math.inf

    def test_nan_rows_skipped(self):
        trace = _trace([0.0, 1.0], [math.nan, 2.0])
        assert runtime_to_target(trace, 5.0) == 1.0


def test_trace_monotonicity_guard():
    good = SolverResult(final_state=ModelState(np.ones((1, 1))),
                        trace=_trace([0.0, 1.0], [2.0, 1.0]))
    good.check_trace_monotone()
    bad = SolverResult(final_state=ModelState(np.ones((1, 1))),
                       trace=_trace([1.0, 0.5], [2.0, 1.0]))
    with pytest.raises(AssertionError):
        bad.check_trace_monotone()
