"""Command-line front end: generate data, run experiments, sweep, compare.

Flags override config-file keys one-to-one; ``asgdsim run --config run.cfg
--b 200`` reruns the config with a different mini-batch size.  Exit codes:
0 on success, 2 on bad configuration or I/O trouble.
"""

from __future__ import annotations

import argparse
import sys

from .datagen import SyntheticSpec, generate
from .harness import (ConfigError, compare_presets, config_from_mapping,
                      parse_config_file, run_experiment, run_sweep)
from .kmeans import save_dataset, save_ground_truth


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--solver", choices=("asgd", "sgd", "spsgd", "batch"))
    p.add_argument("--dataset", help="path to a dataset file (skips generation)")
    p.add_argument("--ground-truth", dest="ground_truth",
                   help="path to the matching ground-truth file")
    p.add_argument("--data-n", dest="data_n", type=int, help="sample dimension")
    p.add_argument("--data-m", dest="data_m", type=int, help="sample count")
    p.add_argument("--data-k", dest="data_k", type=int, help="cluster / prototype count")
    p.add_argument("--sigma", dest="cluster_sigma", type=float)
    p.add_argument("--min-center-dist", dest="min_center_dist", type=float)
    p.add_argument("--box", type=float)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--b", type=int, help="mini-batch size per step")
    p.add_argument("--iterations", type=int, help="mini-batch steps per worker")
    p.add_argument("--samples-per-worker", dest="samples_per_worker", type=int,
                   help="derive iterations from a per-worker sample budget")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--network", help="preset name (infiniband, ethernet) or 'none'")
    p.add_argument("--bandwidth", type=float, help="bytes/second, overrides the preset")
    p.add_argument("--latency", type=float, help="seconds, overrides the preset")
    p.add_argument("--queue-capacity", dest="queue_capacity", type=int)
    p.add_argument("--mode", choices=("virtual-time", "wall-clock"))
    p.add_argument("--torn-writes", dest="torn_writes", action="store_const", const="true")
    p.add_argument("--adaptive-b", dest="adaptive_b", action="store_const", const="true")
    p.add_argument("--q-opt", dest="q_opt", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--b-min", dest="b_min", type=int)
    p.add_argument("--b-max", dest="b_max", type=int)
    p.add_argument("--interval", type=int, help="controller period in worker steps")
    p.add_argument("--folds", type=int)
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--target", help="gt_error goal: number, 'auto', or 'none'")
    p.add_argument("--batch-budget", dest="batch_budget", type=int)
    p.add_argument("--trace-points", dest="trace_points", type=int)
    p.add_argument("--eval-points", dest="eval_points", type=int)


def _gather_config(args: argparse.Namespace):
    mapping = parse_config_file(args.config) if args.config else {}
    skip = {"config", "command", "sweep", "values", "presets", "func"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        mapping[key] = value
    return config_from_mapping(mapping)


def _cmd_generate(args) -> int:
    spec = SyntheticSpec(n=args.n, m=args.m, k=args.k,
                         min_center_dist=args.min_center_dist,
                         cluster_sigma=args.sigma, box=args.box, seed=args.seed)
    X, gt = generate(spec)
    data_path = f"{args.out}.kmd"
    gt_path = f"{args.out}.kmc"
    save_dataset(data_path, X)
    save_ground_truth(gt_path, gt)
    print(f"wrote {data_path} ({X.m} x {X.n}) and {gt_path} ({gt.k} centers)")
    return 0


def _cmd_run(args) -> int:
    cfg = _gather_config(args)
    report = run_experiment(cfg)
    print(f"solver={cfg.solver} folds={cfg.folds} -> {report.median_path}")
    print(f"median final gt_error: {report.median_final_gt_error():.6g}")
    if report.runtimes_to_target:
        print(f"median runtime to target: {report.median_runtime_to_target():.6g} s")
    return 0


def _parse_values(raw: str, variable: str):
    parts = [v.strip() for v in raw.split(",") if v.strip()]
    if not parts:
        raise ConfigError("--values: need a comma-separated list")
    cast = float if variable == "bandwidth" else int
    try:
        return [cast(v) for v in parts]
    except ValueError:
        raise ConfigError(f"--values: could not parse {raw!r} as {cast.__name__}s") from None


def _cmd_sweep(args) -> int:
    cfg = _gather_config(args)
    values = _parse_values(args.values, args.sweep)
    report = run_sweep(cfg, args.sweep, values)
    print(f"swept {args.sweep} over {values} -> {report.summary_path}")
    for value, rep in zip(report.values, report.reports):
        rt = rep.median_runtime_to_target()
        print(f"  {args.sweep}={value}: runtime_to_target={rt:.6g} "
              f"final_gt={rep.median_final_gt_error():.6g}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _gather_config(args)
    presets = [p.strip() for p in args.presets.split(",") if p.strip()]
    report = compare_presets(cfg, presets)
    print(f"compared {presets} -> {report.summary_path}")
    for name, rep in zip(report.presets, report.reports):
        rt = rep.median_runtime_to_target()
        print(f"  {name}: runtime_to_target={rt:.6g} "
              f"final_gt={rep.median_final_gt_error():.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asgdsim",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset + ground truth")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--min-center-dist", dest="min_center_dist", type=float, default=0.0)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--box", type=float, default=10.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="path prefix for .kmd/.kmc files")
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("run", help="run one folded experiment")
    _add_override_flags(r)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="run a folded experiment per swept value")
    _add_override_flags(s)
    s.add_argument("--sweep", choices=("b", "workers", "bandwidth"), required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("compare", help="run the same experiment per network preset")
    _add_override_flags(c)
    c.add_argument("--presets", required=True,
                   help="comma-separated preset names, e.g. ethernet,infiniband")
    c.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
