"""Command-line entry point.

Exit codes: 0 success, 1 validation problem (bad scenario, bad arguments),
2 protocol or runtime failure during a run.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import BUILTIN_NAMES, brute_force_optimum, builtin
from .constraints import ConstraintError, build_cot
from .engine import BudgetSpec, EngineError, run_bo_loop
from .interface import (
    ExternalEvaluator,
    ProtocolError,
    ResultsWriter,
    Scenario,
    ScenarioError,
    load_scenario,
    make_evaluator,
)
from .space import SpaceError

ABLATION_FLAGS = (
    "disable_log_transforms",
    "disable_priors",
    "disable_local_search",
    "disable_feasibility_model",
    "disable_epsilon_filter",
    "disable_advanced_hyperfit",
)


def _add_run_options(parser):
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--method", choices=["bo", "random-uniform", "random-cot"],
                        default=None)
    parser.add_argument("--budget", type=int, default=None,
                        help="override the scenario's full budget")
    parser.add_argument("--budget-level", choices=["tiny", "small", "full"],
                        default="full",
                        help="evaluate with 1/3, 2/3, or all of the full budget")
    parser.add_argument("--timeout", type=float, default=None,
                        help="per-evaluation timeout for external evaluators (s)")
    parser.add_argument("--permutation-metric",
                        choices=["kendall", "spearman", "hamming", "naive"],
                        default=None, help="override every permutation parameter's metric")
    parser.add_argument("--cot-sampling", choices=["leaf", "path"], default=None,
                        help="unbiased leaf sampling or biased per-level path sampling")
    for flag in ABLATION_FLAGS:
        parser.add_argument("--" + flag.replace("_", "-"), action="store_true")


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    if args.seed is not None:
        scenario.seed = args.seed
    if args.method is not None:
        scenario.method = args.method
    if args.budget is not None:
        scenario.budget = args.budget
    scenario.budget = BudgetSpec(scenario.budget).resolve(args.budget_level)
    if scenario.doe_size is not None and scenario.budget < scenario.doe_size:
        scenario.doe_size = scenario.budget
    if args.timeout is not None:
        scenario.options.evaluation_timeout = args.timeout
    if args.permutation_metric is not None:
        scenario.options.permutation_metric = args.permutation_metric
    if args.cot_sampling is not None:
        scenario.options.cot_sampling = args.cot_sampling
    for flag in ABLATION_FLAGS:
        if getattr(args, flag):
            setattr(scenario.options, flag, True)
    return scenario


def _execute(scenario: Scenario, evaluator, output) -> int:
    rng = np.random.default_rng(scenario.seed)
    writer = ResultsWriter(output, scenario.space) if output else None
    try:
        run = run_bo_loop(scenario, evaluator, rng,
                          on_record=writer.write if writer else None)
    finally:
        if writer:
            writer.close()
        if isinstance(evaluator, ExternalEvaluator):
            evaluator.close()
    best = run.best_feasible()
    if best is None:
        print(f"{scenario.name}: no feasible configuration in {len(run.history)} "
              f"evaluations")
    else:
        cfg, value = best
        print(f"{scenario.name}: best objective {value:.6g} at "
              f"{scenario.space.as_dict(cfg)} ({len(run.history)} evaluations)")
    if output:
        print(f"results written to {output}")
    return 0


def _cmd_run(args) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    evaluator = make_evaluator(scenario)
    return _execute(scenario, evaluator, args.output)


def _cmd_count(args) -> int:
    scenario = load_scenario(args.scenario)
    cot = build_cot(scenario.space)
    print(cot.count())
    return 0


def _cmd_bench(args) -> int:
    bench = builtin(args.name)
    scenario = Scenario(name=bench.name, space=bench.space,
                        budget=args.budget or bench.default_budget, seed=0)
    scenario = _apply_overrides(scenario, args)
    code = _execute(scenario, bench, args.output)
    if bench.optimum is not None:
        cfg, value = brute_force_optimum(bench)
        print(f"known optimum: {value:.6g} at {bench.space.as_dict(cfg)}")
    return code


def cli_main(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="boxtune",
        description="Black-box autotuner over mixed constrained search spaces")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="tune a scenario file")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--output", required=True, help="CSV results path")
    _add_run_options(p_run)

    p_count = sub.add_parser("count",
                             help="print the scenario's feasible-set size")
    p_count.add_argument("--scenario", required=True)

    p_bench = sub.add_parser("bench", help="run a built-in benchmark")
    p_bench.add_argument("--name", required=True, choices=list(BUILTIN_NAMES))
    p_bench.add_argument("--output", default=None, help="optional CSV results path")
    _add_run_options(p_bench)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "count":
            return _cmd_count(args)
        return _cmd_bench(args)
    except (ScenarioError, ConstraintError, SpaceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProtocolError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
