"""Command-line entry points: run a benchmark, render a report, validate data.

Exit codes: 0 success, 2 config or dataset error, 3 provider exhausted
globally (every completion call failed), 4 internal harness error.
"""

from __future__ import annotations

import argparse
import logging
import os
import shlex
import sys

from .gateway import PromptKind
from .generation import DebugVariant, GenConfig
from .harness import ConfigError, Policy, RunConfig, report, run_benchmark
from .problems import DatasetError, load_dataset, validate_problem
from .sandbox import ExecLimits

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_INTERNAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sstar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark end to end")
    run.add_argument("--dataset", required=True, help="JSONL dataset path")
    run.add_argument("--policy", default="adaptive", choices=[p.value for p in Policy])
    run.add_argument("--n", type=int, default=16, help="parallel samples per problem")
    run.add_argument("--rounds", type=int, default=2, help="max iterative debugging rounds")
    run.add_argument("--temperature", type=float, default=0.7)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--provider", default="mock", choices=["live", "mock"])
    run.add_argument("--tape", default=None, help="mock tape (JSONL of key/response)")
    run.add_argument("--out", required=True, help="output directory for the manifest")
    run.add_argument("--debug-variant", default="public",
                     choices=[v.value for v in DebugVariant])
    run.add_argument("--probe-budget", type=int, default=8)
    run.add_argument("--distinguish-budget", type=int, default=2)
    run.add_argument("--gen-test-budget", type=int, default=4)
    run.add_argument("--numeric-tol", type=float, default=None)
    run.add_argument("--model", default="mock-model", help="model id for every prompt kind")
    run.add_argument("--judge-model", default=None,
                     help="model id for selection-side prompts (test/input generation and judging)")
    run.add_argument("--wall-timeout", type=float, default=6.0, help="seconds per execution")
    run.add_argument("--memory-cap", type=int, default=512, help="MiB per execution")
    run.add_argument("--runner-cmd", default=None,
                     help="external Runner-contract command (default: built-in stub shim)")
    run.add_argument("--jobs", type=int, default=1, help="problems evaluated concurrently")
    run.add_argument("--no-memoize", action="store_true",
                     help="disable execution memoization (deterministic programs only)")
    run.add_argument("--cache-dir", default=None,
                     help="completion cache directory (default: $SSTAR_CACHE_DIR if set)")

    rep = sub.add_parser("report", help="render a finished run")
    rep.add_argument("--manifest", required=True, help="run output directory")
    rep.add_argument("--format", default="table", choices=["table", "json"])

    val = sub.add_parser("validate", help="load a dataset and report violations")
    val.add_argument("--dataset", required=True)
    return parser


def _models(args) -> str | dict:
    if not args.judge_model:
        return args.model
    models = {kind: args.model for kind in PromptKind}
    for kind in (PromptKind.TEST_INPUT_GEN, PromptKind.DISTINGUISH_INPUT_GEN, PromptKind.PAIR_JUDGE):
        models[kind] = args.judge_model
    return models


def _cmd_run(args) -> int:
    cache_dir = args.cache_dir or os.environ.get("SSTAR_CACHE_DIR") or None
    cfg = RunConfig(
        dataset_path=args.dataset,
        policy=Policy(args.policy),
        gen=GenConfig(
            n_samples=args.n,
            max_debug_rounds=args.rounds,
            temperature=args.temperature,
            debug_variant=DebugVariant(args.debug_variant),
            generated_test_budget=args.gen_test_budget,
        ),
        limits=ExecLimits(wall_timeout=args.wall_timeout, memory_cap_mib=args.memory_cap),
        seed=args.seed,
        out_dir=args.out,
        models=_models(args),
        provider=args.provider,
        tape_path=args.tape,
        cache_dir=cache_dir,
        probe_budget=args.probe_budget,
        distinguish_budget=args.distinguish_budget,
        numeric_tol=args.numeric_tol,
        runner_command=tuple(shlex.split(args.runner_cmd)) if args.runner_cmd else None,
        jobs=args.jobs,
        memoize_executions=not args.no_memoize,
    )
    manifest = run_benchmark(cfg)
    sys.stdout.write(report(manifest, "table"))
    stats = manifest.provider_stats
    if stats.get("failures", 0) > 0 and stats.get("successes", 0) == 0:
        sys.stderr.write("error: every provider call failed; results are degenerate\n")
        return EXIT_PROVIDER
    return EXIT_OK


def _cmd_validate(args) -> int:
    dataset = load_dataset(args.dataset)
    violations = 0
    for problem in dataset.problems:
        for issue in validate_problem(problem):
            print(f"{problem.id}: {issue}")
            violations += 1
    print(f"{len(dataset)} problems, {violations} violations")
    return EXIT_OK if violations == 0 else EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SSTAR_LOG", "WARNING"))
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            sys.stdout.write(report(args.manifest, args.format))
            return EXIT_OK
        if args.command == "validate":
            return _cmd_validate(args)
        return EXIT_CONFIG
    except (ConfigError, DatasetError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        sys.stderr.write("interrupted\n")
        return EXIT_INTERNAL
    except Exception as e:  # internal harness failure: loud, typed exit
        logging.getLogger(__name__).exception("internal error")
        sys.stderr.write(f"internal error: {e}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
