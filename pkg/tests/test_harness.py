import csv
import math
from dataclasses import replace
from pathlib import Path

import pytest

from asgdsim.datagen import SyntheticSpec, generate
from asgdsim.harness import (
    TRACE_COLUMNS,
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    fold_targets,
    lower_median,
    median_trace,
    parse_config_file,
    run_experiment,
    run_sweep,
    compare_presets,
)
from asgdsim.kmeans import save_dataset, save_ground_truth
from asgdsim.model import Hyperparams
from asgdsim.results import TracePoint
from asgdsim.seeding import initial_state
from asgdsim.solvers import batch_gd


def tiny_config(tmp_path, **kw):
    base = dict(
        solver="asgd", data_n=2, data_m=400, data_k=3, min_center_dist=4.0,
        cluster_sigma=0.5, box=8.0, data_seed=1, epsilon=0.05, b=8,
        iterations=40, workers=2, seed=0, network="infiniband", folds=2,
        trace_points=10, eval_points=512, out=str(tmp_path / "exp"),
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestLowerMedian:
    def test_odd_count_is_the_middle(self):
        assert lower_median([3.0, 1.0, 2.0]) == 2.0

    def test_even_count_takes_the_lower_of_the_two(self):
        assert lower_median([4.0, 1.0, 3.0, 2.0]) == 2.0

    def test_single_value(self):
        assert lower_median([7.5]) == 7.5

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            lower_median([])

    def test_always_an_observed_value(self):
        import random
        rnd = random.Random(3)
        for _ in range(50):
            vals = [rnd.uniform(0, 10) for _ in range(rnd.randint(1, 9))]
            assert lower_median(vals) in vals


class TestConfigParsing:
    def test_key_value_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# comment\n b = 32 \nepsilon=0.1  # inline\n\nsolver = sgd\n")
        assert parse_config_file(p) == {"b": "32", "epsilon": "0.1", "solver": "sgd"}

    def test_malformed_line_names_the_location(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("b = 3\nnonsense\n")
        with pytest.raises(ConfigError, match=":2"):
            parse_config_file(p)

    def test_mapping_coercion(self):
        cfg = config_from_mapping({"b": "32", "epsilon": "0.1",
                                   "torn_writes": "yes", "adaptive_b": False,
                                   "target": "0.25"})
        assert (cfg.b, cfg.epsilon) == (32, 0.1)
        assert cfg.torn_writes is True
        assert cfg.adaptive_b is False
        assert cfg.target == "0.25"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            config_from_mapping({"bandwith": "1.0"})

    def test_bad_value_names_the_key(self):
        with pytest.raises(ConfigError, match="b:"):
            config_from_mapping({"b": "many"})
        with pytest.raises(ConfigError, match="torn_writes"):
            config_from_mapping({"torn_writes": "perhaps"})

    @pytest.mark.parametrize("kw,needle", [
        (dict(solver="newton"), "solver"),
        (dict(folds=0), "folds"),
        (dict(target="fast"), "target"),
        (dict(dataset="x.kmd", target="auto"), "ground truth"),
        (dict(samples_per_worker=-1), "samples_per_worker"),
        (dict(trace_points=0), "trace_points"),
        (dict(network="smoke-signals"), "network"),
        (dict(mode="both"), "network"),
    ])
    def test_config_validation(self, kw, needle):
        with pytest.raises(ConfigError, match=needle):
            ExperimentConfig(**kw)

    def test_resolved_iterations_from_sample_budget(self):
        assert ExperimentConfig(samples_per_worker=1000, b=32).resolved_iterations() == 31
        assert ExperimentConfig(samples_per_worker=100, b=1000).resolved_iterations() == 1
        assert ExperimentConfig(iterations=77).resolved_iterations() == 77

    def test_network_model_resolution(self):
        assert ExperimentConfig(network="none").network_model() is None
        net = ExperimentConfig(network="ethernet", bandwidth=1e6,
                               queue_capacity=4).network_model()
        assert (net.bandwidth, net.latency, net.queue_capacity) == (1e6, 50e-6, 4)

    def test_manifest_round_trips_to_an_equal_config(self, tmp_path):
        cfg = tiny_config(tmp_path, network="ethernet", epsilon=0.07,
                          adaptive_b=True, target="0.5")
        p = tmp_path / "manifest.txt"
        p.write_text(cfg.manifest_text())
        again = config_from_mapping(parse_config_file(p))
        assert again == cfg


def _col(path, name):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [float(r[name]) for r in rows]


class TestRunExperiment:
    def test_writes_folds_median_and_manifest(self, tmp_path):
        cfg = tiny_config(tmp_path)
        report = run_experiment(cfg)
        for fold in range(2):
            assert Path(f"{cfg.out}_fold{fold:02d}.csv").exists()
        assert Path(report.median_path).exists()
        assert Path(report.manifest_path).exists()
        with open(report.fold_paths[0]) as fh:
            header = fh.readline().strip()
        assert header == ",".join(TRACE_COLUMNS)
        assert len(report.median_trace) == len(report.fold_traces[0])

    def test_median_is_element_wise_lower_median(self, tmp_path):
        cfg = tiny_config(tmp_path, folds=3)
        report = run_experiment(cfg)
        for i, row in enumerate(report.median_trace):
            expect = lower_median([t[i].gt_error for t in report.fold_traces])
            assert row.gt_error == expect
        file_med = _col(report.median_path, "gt_error")
        assert file_med == [r.gt_error for r in report.median_trace]

    def test_folds_see_different_data_and_seeds(self, tmp_path):
        cfg = tiny_config(tmp_path)
        report = run_experiment(cfg)
        a, b = report.fold_traces
        assert [p.gt_error for p in a] != [p.gt_error for p in b]

    def test_numeric_target_fills_runtimes(self, tmp_path):
        cfg = tiny_config(tmp_path, target="1000000.0")
        report = run_experiment(cfg)
        assert report.targets == [1e6, 1e6]
        assert report.runtimes_to_target == [0.0, 0.0]  # start already below
        assert report.median_runtime_to_target() == 0.0

    def test_auto_target_is_five_times_best_batch_error(self, tmp_path):
        cfg = tiny_config(tmp_path, target="auto", batch_budget=5)
        targets = fold_targets(cfg)
        spec = SyntheticSpec(n=2, m=400, k=3, min_center_dist=4.0,
                             cluster_sigma=0.5, box=8.0, seed=cfg.data_seed)
        X, gt = generate(spec)
        w0 = initial_state(X, 3, cfg.seed)
        hp = Hyperparams(epsilon=cfg.epsilon, b=1, iterations=5, workers=1,
                         seed=cfg.seed)
        ref = batch_gd(X, hp, w0, gt=gt, cost=cfg.cost_model(),
                       eval_points=cfg.eval_points)
        assert targets[0] == 5.0 * min(p.gt_error for p in ref.trace)

    def test_no_target_leaves_runtimes_empty(self, tmp_path):
        report = run_experiment(tiny_config(tmp_path))
        assert report.runtimes_to_target == []
        assert math.isnan(report.median_runtime_to_target())

    def test_unreachable_target_is_inf(self, tmp_path):
        cfg = tiny_config(tmp_path, target="1e-30")
        report = run_experiment(cfg)
        assert all(rt == math.inf for rt in report.runtimes_to_target)

    def test_fold_failures_name_the_fold(self, tmp_path):
        cfg = tiny_config(tmp_path, data_m=4, workers=8)
        with pytest.raises(RuntimeError, match="fold 0"):
            run_experiment(cfg)

    def test_file_dataset_is_shared_across_folds(self, tmp_path):
        X, gt = generate(SyntheticSpec(n=2, m=300, k=3, min_center_dist=4.0,
                                       cluster_sigma=0.5, box=8.0, seed=9))
        dpath, gpath = tmp_path / "d.kmd", tmp_path / "d.kmc"
        save_dataset(dpath, X)
        save_ground_truth(gpath, gt)
        cfg = tiny_config(tmp_path, dataset=str(dpath), ground_truth=str(gpath),
                          data_m=300)
        report = run_experiment(cfg)
        # same data, different seeds: traces differ but start from the same
        # quantization landscape
        a, b = report.fold_traces
        assert a[0].quant_error != b[0].quant_error or a != b

    def test_file_ground_truth_sizes_the_model(self, tmp_path):
        X, gt = generate(SyntheticSpec(n=2, m=300, k=4, min_center_dist=4.0,
                                       cluster_sigma=0.5, box=8.0, seed=11))
        dpath, gpath = tmp_path / "d.kmd", tmp_path / "d.kmc"
        save_dataset(dpath, X)
        save_ground_truth(gpath, gt)
        # data_k deliberately disagrees with the file pair
        cfg = tiny_config(tmp_path, dataset=str(dpath), ground_truth=str(gpath),
                          data_k=9, folds=1)
        report = run_experiment(cfg)
        assert math.isfinite(report.fold_traces[0][-1].gt_error)

    def test_solver_dispatch(self, tmp_path):
        for solver in ("sgd", "spsgd", "batch"):
            cfg = tiny_config(tmp_path, solver=solver, iterations=5, folds=1,
                              out=str(tmp_path / solver))
            report = run_experiment(cfg)
            assert Path(report.median_path).exists()


class TestSweepAndCompare:
    def test_sweep_writes_summary_and_shares_targets(self, tmp_path):
        cfg = tiny_config(tmp_path, target="0.5", folds=2)
        sweep = run_sweep(cfg, "b", [4, 8])
        assert Path(sweep.summary_path).exists()
        assert sweep.reports[0].targets == sweep.reports[1].targets
        assert Path(f"{cfg.out}_b4_fold00.csv").exists()
        assert Path(f"{cfg.out}_b8_median.csv").exists()
        with open(sweep.summary_path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "b"
        assert [r[0] for r in rows[1:]] == ["4", "8"]

    def test_sweep_rejects_unknown_variable(self, tmp_path):
        with pytest.raises(ConfigError, match="sweep variable"):
            run_sweep(tiny_config(tmp_path), "epsilon", [0.1])

    def test_sweep_rejects_empty_values(self, tmp_path):
        with pytest.raises(ConfigError):
            run_sweep(tiny_config(tmp_path), "b", [])

    def test_compare_runs_each_preset(self, tmp_path):
        cfg = tiny_config(tmp_path, target="0.5", folds=1, iterations=20)
        cmp_report = compare_presets(cfg, ["infiniband", "ethernet"])
        assert Path(cmp_report.summary_path).exists()
        assert Path(f"{cfg.out}_infiniband_median.csv").exists()
        assert Path(f"{cfg.out}_ethernet_median.csv").exists()
        with open(cmp_report.summary_path) as fh:
            rows = list(csv.reader(fh))
        assert [r[0] for r in rows] == ["network", "infiniband", "ethernet"]
        assert cmp_report.reports[0].targets == cmp_report.reports[1].targets


class TestMedianTrace:
    def test_mismatched_lengths_raise(self):
        t1 = [TracePoint(0, 0.0, 1.0, 1.0)]
        t2 = [TracePoint(0, 0.0, 1.0, 1.0), TracePoint(1, 1.0, 0.5, 0.5)]
        with pytest.raises(ValueError, match="mismatched"):
            median_trace([t1, t2])

    def test_element_wise_medians(self):
        def tp(q):
            return TracePoint(samples=1, time_s=2.0, quant_error=q, gt_error=q)
        med = median_trace([[tp(3.0)], [tp(1.0)], [tp(2.0)]])
        assert med[0].quant_error == 2.0
