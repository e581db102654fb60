"""Experiment harness: folded runs, trace CSVs, medians, sweeps, manifests.

A run is described by a flat key = value config (file keys and CLI flags map
one-to-one).  Each fold f re-derives everything from (seed + f, data_seed + f),
writes its own trace CSV, and the harness aggregates the folds element-wise
into a median CSV plus a manifest that reproduces the whole run byte-for-byte
when fed back in as the config.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .adaptive import default_controller
from .datagen import SyntheticSpec, generate
from .engine import CostModel, run_asgd
from .kmeans import load_dataset, load_ground_truth
from .model import Hyperparams
from .results import SolverResult, TracePoint, runtime_to_target
from .seeding import initial_state
from .solvers import batch_gd, sgd_run, simuparallel_sgd
from .transport import NetworkModel, network_preset

TRACE_COLUMNS = ("time_s", "samples", "quant_error", "gt_error",
                 "msgs_sent", "msgs_accepted", "b_current")

SOLVERS = ("asgd", "sgd", "spsgd", "batch")
SWEEP_VARIABLES = ("b", "workers", "bandwidth")


class ConfigError(ValueError):
    """A config key failed to parse or validate; the message names the key."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one folded experiment."""

    solver: str = "asgd"
    # data: either a file pair or a synthetic recipe regenerated per fold
    dataset: str = ""
    ground_truth: str = ""
    data_n: int = 10
    data_m: int = 50_000
    data_k: int = 10
    min_center_dist: float = 0.0
    cluster_sigma: float = 1.0
    box: float = 10.0
    data_seed: int = 1
    # solver knobs
    epsilon: float = 0.05
    b: int = 50
    iterations: int = 200
    samples_per_worker: int = 0  # when > 0, overrides iterations = round(spw / b)
    workers: int = 8
    seed: int = 0
    # network
    network: str = "infiniband"  # preset name, or "none" to disable communication
    bandwidth: float = 0.0  # overrides the preset when > 0
    latency: float = -1.0  # overrides the preset when >= 0
    queue_capacity: int = 0  # overrides the preset when > 0
    mode: str = "virtual-time"
    torn_writes: bool = False
    # adaptive controller
    adaptive_b: bool = False
    q_opt: int = 0  # 0 means "half the queue capacity"
    gamma: float = 0.0  # 0 means "0.1 * b / q_opt"
    b_min: int = 8
    b_max: int = 100_000
    interval: int = 10
    # harness
    folds: int = 10
    out: str = "run"
    target: str = "none"  # "none", "auto" (5x best batch_gd), or a number
    batch_budget: int = 30  # epochs for the auto-target batch run
    trace_points: int = 100
    eval_points: int = 2048
    # virtual compute-cost model
    cost_component_s: float = 1e-9
    cost_overhead_s: float = 1e-6
    cost_filter_factor: float = 3.0
    cost_send_factor: float = 1.0

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver: must be one of {SOLVERS}, got {self.solver!r}")
        if self.folds < 1:
            raise ConfigError("folds: must be >= 1")
        if self.target not in ("none", "auto"):
            try:
                float(self.target)
            except ValueError:
                raise ConfigError(f"target: expected 'none', 'auto', or a number, "
                                  f"got {self.target!r}") from None
        if self.dataset and not self.ground_truth and self.target != "none":
            raise ConfigError("target: needs ground truth; pass ground_truth= with "
                              "file datasets or set target = none")
        if self.samples_per_worker < 0:
            raise ConfigError("samples_per_worker: must be >= 0")
        if self.trace_points < 1:
            raise ConfigError("trace_points: must be >= 1")
        self.network_model()  # fail on a bad preset/override here, not mid-fold

    def resolved_iterations(self) -> int:
        if self.samples_per_worker > 0:
            return max(1, round(self.samples_per_worker / self.b))
        return self.iterations

    def network_model(self) -> NetworkModel | None:
        if self.network == "none":
            return None
        overrides = {"mode": self.mode, "torn_writes": self.torn_writes}
        if self.bandwidth > 0:
            overrides["bandwidth"] = self.bandwidth
        if self.latency >= 0:
            overrides["latency"] = self.latency
        if self.queue_capacity > 0:
            overrides["queue_capacity"] = self.queue_capacity
        try:
            return network_preset(self.network, **overrides)
        except ValueError as exc:
            raise ConfigError(f"network: {exc}") from None

    def cost_model(self) -> CostModel:
        return CostModel(component_seconds=self.cost_component_s,
                         step_overhead_seconds=self.cost_overhead_s,
                         filter_factor=self.cost_filter_factor,
                         send_factor=self.cost_send_factor)

    def manifest_text(self) -> str:
        lines = ["# run manifest: feed this file back as --config to reproduce"]
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


_BOOL_KEYS = frozenset({"torn_writes", "adaptive_b"})
_STR_KEYS = frozenset({"solver", "dataset", "ground_truth", "network", "mode",
                       "out", "target"})


def _coerce(key: str, value, target_type):
    if isinstance(value, str):
        value = value.strip()
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("true", "1", "yes", "on"):
            return True
        if str(value).lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if key in _STR_KEYS:
        return str(value)
    try:
        if target_type is int:
            return int(str(value))
        if target_type is float:
            return float(str(value))
    except ValueError:
        raise ConfigError(f"{key}: expected {target_type.__name__}, got {value!r}") from None
    return value


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw, type(getattr(defaults, key)))
    return ExperimentConfig(**values)


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; blank lines ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = text.partition("=")
        out[key.strip()] = value.strip()
    return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    fold_paths: list
    median_path: str
    manifest_path: str
    fold_traces: list  # list[list[TracePoint]]
    median_trace: list  # list[TracePoint]
    targets: list  # per-fold gt_error target, or [] when target = none
    runtimes_to_target: list  # per-fold virtual seconds, inf when unreached
    final_gt_errors: list
    final_msgs_accepted: list

    def median_runtime_to_target(self) -> float:
        return lower_median(self.runtimes_to_target) if self.runtimes_to_target else math.nan

    def median_final_gt_error(self) -> float:
        return lower_median(self.final_gt_errors)

    def median_final_msgs_accepted(self) -> float:
        return lower_median(self.final_msgs_accepted)


def lower_median(values):
    """Median that returns an actually observed value: sorted[(len-1)//2]."""
    if not values:
        raise ValueError("median of an empty list")
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def _fold_data(cfg: ExperimentConfig, fold: int):
    if cfg.dataset:
        X = load_dataset(cfg.dataset)
        gt = load_ground_truth(cfg.ground_truth) if cfg.ground_truth else None
        return X, gt
    spec = SyntheticSpec(n=cfg.data_n, m=cfg.data_m, k=cfg.data_k,
                         min_center_dist=cfg.min_center_dist,
                         cluster_sigma=cfg.cluster_sigma, box=cfg.box,
                         seed=cfg.data_seed + fold)
    return generate(spec)


def _model_k(cfg: ExperimentConfig, gt) -> int:
    # a dataset file is the shape authority, same as for n and m; data_k
    # only sizes the model when no ground truth pins it
    if cfg.dataset and gt is not None:
        return gt.true_centers.shape[0]
    return cfg.data_k


def _run_fold(cfg: ExperimentConfig, fold: int) -> SolverResult:
    X, gt = _fold_data(cfg, fold)
    seed = cfg.seed + fold
    w0 = initial_state(X, _model_k(cfg, gt), seed)
    hp = Hyperparams(epsilon=cfg.epsilon, b=cfg.b,
                     iterations=cfg.resolved_iterations(),
                     workers=cfg.workers, seed=seed)
    cost = cfg.cost_model()
    common = dict(gt=gt, cost=cost, trace_points=cfg.trace_points,
                  eval_points=cfg.eval_points)
    try:
        if cfg.solver == "sgd":
            return sgd_run(X, hp, w0, **common)
        if cfg.solver == "spsgd":
            return simuparallel_sgd(X, hp, w0, **common)
        if cfg.solver == "batch":
            common.pop("trace_points")
            return batch_gd(X, hp, w0, **common)
        net = cfg.network_model()
        controller = None
        if cfg.adaptive_b:
            capacity = net.queue_capacity if net is not None else 64
            controller = default_controller(
                b=cfg.b, queue_capacity=capacity, interval=cfg.interval,
                gamma=cfg.gamma if cfg.gamma > 0 else None,
                q_opt=cfg.q_opt if cfg.q_opt > 0 else None,
                b_min=cfg.b_min, b_max=cfg.b_max)
        return run_asgd(X, hp, w0, net, controller, **common)
    except Exception as exc:
        raise RuntimeError(f"fold {fold} failed: {exc}") from exc


def _fold_target(cfg: ExperimentConfig, fold: int) -> float:
    """The gt_error level a fold must reach; see ``target`` in the config."""
    if cfg.target == "none":
        return math.nan
    if cfg.target != "auto":
        return float(cfg.target)
    X, gt = _fold_data(cfg, fold)
    if gt is None:
        raise ConfigError("target: auto target needs ground truth")
    seed = cfg.seed + fold
    w0 = initial_state(X, _model_k(cfg, gt), seed)
    hp = Hyperparams(epsilon=cfg.epsilon, b=1, iterations=cfg.batch_budget,
                     workers=1, seed=seed)
    ref = batch_gd(X, hp, w0, gt=gt, cost=cfg.cost_model(),
                   eval_points=cfg.eval_points)
    best = min(p.gt_error for p in ref.trace)
    return 5.0 * best


def fold_targets(cfg: ExperimentConfig) -> list:
    return [_fold_target(cfg, f) for f in range(cfg.folds)]


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace_csv(path, trace) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for p in trace:
            writer.writerow([_format_cell(v) for v in
                             (p.time_s, p.samples, p.quant_error, p.gt_error,
                              p.msgs_sent, p.msgs_accepted, p.b)])


def median_trace(traces) -> list:
    """Element-wise lower median across folds at aligned checkpoints."""
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"fold traces have mismatched lengths: {sorted(lengths)}")
    out = []
    for row in zip(*traces):
        out.append(TracePoint(
            samples=lower_median([p.samples for p in row]),
            time_s=lower_median([p.time_s for p in row]),
            quant_error=lower_median([p.quant_error for p in row]),
            gt_error=lower_median([p.gt_error for p in row]),
            msgs_sent=lower_median([p.msgs_sent for p in row]),
            msgs_accepted=lower_median([p.msgs_accepted for p in row]),
            b=lower_median([p.b for p in row]),
        ))
    return out


def run_experiment(cfg: ExperimentConfig, targets: list | None = None) -> ExperimentReport:
    """Run every fold, write per-fold CSVs, the median CSV, and the manifest.

    ``targets`` lets a caller (the sweep) reuse per-fold targets it already
    computed; otherwise they are resolved from ``cfg.target``.
    """
    if targets is None:
        targets = fold_targets(cfg)
    if len(targets) != cfg.folds:
        raise ValueError(f"need {cfg.folds} targets, got {len(targets)}")

    fold_paths, traces = [], []
    runtimes, finals, msgs = [], [], []
    for fold in range(cfg.folds):
        result = _run_fold(cfg, fold)
        result.check_trace_monotone()
        path = f"{cfg.out}_fold{fold:02d}.csv"
        write_trace_csv(path, result.trace)
        fold_paths.append(path)
        traces.append(result.trace)
        finals.append(result.trace[-1].gt_error)
        msgs.append(result.trace[-1].msgs_accepted)
        runtimes.append(runtime_to_target(result.trace, targets[fold])
                        if not math.isnan(targets[fold]) else math.nan)

    med = median_trace(traces)
    median_path = f"{cfg.out}_median.csv"
    write_trace_csv(median_path, med)
    manifest_path = f"{cfg.out}_manifest.txt"
    Path(manifest_path).parent.mkdir(parents=True, exist_ok=True)
    Path(manifest_path).write_text(cfg.manifest_text())

    return ExperimentReport(
        config=cfg, fold_paths=fold_paths, median_path=median_path,
        manifest_path=manifest_path, fold_traces=traces, median_trace=med,
        targets=list(targets),
        runtimes_to_target=runtimes if cfg.target != "none" else [],
        final_gt_errors=finals, final_msgs_accepted=msgs)


def _sweep_value_config(cfg: ExperimentConfig, variable: str, value) -> ExperimentConfig:
    tag = f"{value:g}" if isinstance(value, float) else str(value)
    out = f"{cfg.out}_{variable}{tag}"
    if variable == "b":
        return replace(cfg, b=int(value), out=out)
    if variable == "workers":
        return replace(cfg, workers=int(value), out=out)
    if variable == "bandwidth":
        return replace(cfg, bandwidth=float(value), out=out)
    raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")


@dataclass
class SweepReport:
    variable: str
    values: list
    reports: list
    summary_path: str


def run_sweep(cfg: ExperimentConfig, variable: str, values) -> SweepReport:
    """One folded experiment per value; per-fold targets are shared across
    values so every point chases the same goal."""
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    targets = fold_targets(cfg)
    reports = [run_experiment(_sweep_value_config(cfg, variable, v), targets)
               for v in values]

    summary_path = f"{cfg.out}_summary.csv"
    Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([variable, "median_runtime_to_target",
                         "median_final_gt_error", "median_msgs_accepted"])
        for value, report in zip(values, reports):
            writer.writerow([_format_cell(value),
                             _format_cell(report.median_runtime_to_target()),
                             _format_cell(report.median_final_gt_error()),
                             _format_cell(report.median_final_msgs_accepted())])
    return SweepReport(variable=variable, values=list(values), reports=reports,
                       summary_path=summary_path)


@dataclass
class CompareReport:
    presets: list
    reports: list
    summary_path: str


def compare_presets(cfg: ExperimentConfig, presets) -> CompareReport:
    """The same experiment once per network preset, same folds and targets."""
    if not presets:
        raise ConfigError("compare needs at least one preset")
    targets = fold_targets(cfg)
    reports = []
    for name in presets:
        sub = replace(cfg, network=name, bandwidth=0.0, latency=-1.0,
                      out=f"{cfg.out}_{name}")
        reports.append(run_experiment(sub, targets))

    summary_path = f"{cfg.out}_compare.csv"
    Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["network", "median_runtime_to_target",
                         "median_final_gt_error", "median_msgs_accepted"])
        for name, report in zip(presets, reports):
            writer.writerow([name,
                             _format_cell(report.median_runtime_to_target()),
                             _format_cell(report.median_final_gt_error()),
                             _format_cell(report.median_final_msgs_accepted())])
    return CompareReport(presets=list(presets), reports=reports,
                         summary_path=summary_path)
