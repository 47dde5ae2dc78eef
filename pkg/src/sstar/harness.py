"""Run orchestration: datasets in, manifests and metrics out.

Each problem flows through generation, the configured selection policy,
and a private-suite verdict for the chosen candidate; Pass@1 is the mean
chosen verdict and Pass@N the mean any-candidate-correct indicator (the
oracle upper bound). Manifests are written append-only per problem plus
a canonical aggregate file, so a crashed run keeps its finished problems
and a replayed run can be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import __version__
from .gateway import Gateway, LiveProvider, MockProvider, load_tape, template_versions
from .generation import CandidateProgram, GenConfig, run_generation_stage
from .metrics import mean_or_none
from .problems import Difficulty, Problem, load_dataset
from .sandbox import ExecLimits, HarnessError, Sandbox, SubprocessRunner, stub_runner
from .selection import (
    Cluster,
    SelectionReport,
    check_report,
    rng_for,
    select_adaptive,
    select_generated_tests,
    select_llm_judge,
    select_majority_vote,
    select_public_only,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Policy",
    "ConfigError",
    "RunConfig",
    "ProblemResult",
    "RunManifest",
    "evaluate_problem",
    "run_benchmark",
    "report",
]

_DIFFICULTY_ORDER = [Difficulty.EASY, Difficulty.MEDIUM, Difficulty.HARD, Difficulty.UNKNOWN]


class Policy(str, Enum):
    ADAPTIVE = "adaptive"
    PUBLIC_ONLY = "public-only"
    GENERATED_TESTS = "generated-tests"
    LLM_JUDGE = "llm-judge"
    MAJORITY_VOTE = "majority-vote"
    ORACLE = "oracle"


class ConfigError(Exception):
    """Bad run configuration or dataset; maps to CLI exit code 2."""


@dataclass
class RunConfig:
    dataset_path: str
    policy: Policy = Policy.ADAPTIVE
    gen: GenConfig = field(default_factory=GenConfig)
    limits: ExecLimits = field(default_factory=ExecLimits)
    seed: int = 0
    out_dir: str | None = None
    models: str | dict = "mock-model"
    provider: str = "mock"
    tape_path: str | None = None
    cache_dir: str | None = None
    probe_budget: int = 8
    distinguish_budget: int = 2
    numeric_tol: float | None = None
    runner_command: tuple[str, ...] | None = None
    jobs: int = 1
    workers: int | None = None
    memoize_executions: bool = True

    def snapshot(self) -> dict:
        """JSON-able config snapshot recorded in the manifest."""
        return {
            "dataset_path": str(self.dataset_path),
            "policy": self.policy.value,
            "gen": {
                "n_samples": self.gen.n_samples,
                "max_debug_rounds": self.gen.max_debug_rounds,
                "temperature": self.gen.temperature,
                "debug_variant": self.gen.debug_variant.value,
                "generated_test_budget": self.gen.generated_test_budget,
            },
            "limits": {
                "wall_timeout": self.limits.wall_timeout,
                "memory_cap_mib": self.limits.memory_cap_mib,
                "max_output_bytes": self.limits.max_output_bytes,
            },
            "seed": self.seed,
            "models": self.models if isinstance(self.models, str) else dict(self.models),
            "provider": self.provider,
            "tape_path": str(self.tape_path) if self.tape_path else None,
            "probe_budget": self.probe_budget,
            "distinguish_budget": self.distinguish_budget,
            "numeric_tol": self.numeric_tol,
            "runner_command": list(self.runner_command) if self.runner_command else None,
            "jobs": self.jobs,
        }


@dataclass
class ProblemResult:
    problem_id: str
    difficulty: Difficulty
    round_trace: list[int]
    candidates: list[dict]
    selection: SelectionReport | None
    chosen_verdict: bool
    any_pass_private: bool
    error: str | None = None


@dataclass
class RunManifest:
    config: dict
    results: list[ProblemResult]
    aggregate: dict
    template_versions: dict
    code_version: str
    wall_clock_seconds: float
    complete: bool = True
    provider_stats: dict = field(default_factory=dict)
    executions: int = 0


def build_gateway(cfg: RunConfig, provider=None) -> Gateway:
    if provider is None:
        if cfg.provider == "mock":
            if not cfg.tape_path:
                raise ConfigError("mock provider requires a tape path")
            try:
                provider = MockProvider(load_tape(cfg.tape_path))
            except (OSError, ValueError, KeyError) as e:
                raise ConfigError(f"cannot load tape {cfg.tape_path}: {e}") from e
        elif cfg.provider == "live":
            try:
                provider = LiveProvider()
            except ValueError as e:
                raise ConfigError(str(e)) from e
        else:
            raise ConfigError(f"unknown provider {cfg.provider!r}")
    return Gateway(provider, models=cfg.models, cache_dir=cfg.cache_dir)


def build_sandbox(cfg: RunConfig) -> Sandbox:
    runner = SubprocessRunner(cfg.runner_command) if cfg.runner_command else stub_runner()
    return Sandbox(
        runner,
        limits=cfg.limits,
        numeric_tol=cfg.numeric_tol,
        workers=cfg.workers,
        memoize=cfg.memoize_executions,
    )


def _source_digest(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()[:12]


def _signature_digest(cluster: Cluster) -> str | None:
    if cluster.signature is None:
        return None
    blob = json.dumps(list(cluster.signature), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _selection_record(sel: SelectionReport | None) -> dict | None:
    if sel is None:
        return None
    record = {
        "policy": sel.policy,
        "rng_seed": sel.rng_seed,
        "clusters": [
            {
                "members": list(c.member_indices),
                "representative": c.representative,
                "signature": _signature_digest(c),
            }
            for c in sel.clusters
        ],
        "scores": sel.scores,
        "winner_cluster": sel.winner_cluster,
        "chosen_index": sel.chosen_index,
        "notes": sel.notes,
    }
    if sel.tournament is not None:
        record["matches"] = [
            {
                "clusters": [m.cluster_i, m.cluster_j],
                "inputs": list(m.inputs),
                "verdict": m.verdict,
                "consistent": m.consistent,
            }
            for m in sel.tournament
        ]
    return record


def _result_record(result: ProblemResult) -> dict:
    return {
        "problem_id": result.problem_id,
        "difficulty": result.difficulty.value,
        "round_trace": result.round_trace,
        "candidates": result.candidates,
        "selection": _selection_record(result.selection),
        "chosen_verdict": result.chosen_verdict,
        "any_pass_private": result.any_pass_private,
        "error": result.error,
    }


def _oracle_report(candidates: list[CandidateProgram], problem: Problem, seed: int,
                   private_verdicts: list[bool]) -> SelectionReport:
    rng, rng_hex = rng_for(seed, problem.id, "oracle")
    passing = [i for i, ok in enumerate(private_verdicts) if ok]
    if passing:
        chosen = passing[0]
        note = "oracle: lowest-index private-passing candidate"
    else:
        best = max(c.public_pass_fraction for c in candidates)
        survivors = sorted(
            (i for i, c in enumerate(candidates) if c.public_pass_fraction == best),
            key=lambda i: (candidates[i].source, i),
        )
        chosen = survivors[rng.randrange(len(survivors))]
        note = "oracle: no candidate passes the private suite; public-only fallback pick"
    all_members = tuple(range(len(candidates)))
    return check_report(SelectionReport(
        policy="oracle",
        clusters=[Cluster(signature=None, member_indices=all_members, representative=0)],
        scores=[],
        winner_cluster=0,
        chosen_index=chosen,
        rng_seed=rng_hex,
        notes=[note],
    ))


def _run_selection(policy: Policy, candidates, problem, gateway, sandbox, cfg: RunConfig,
                   private_verdicts: list[bool]) -> SelectionReport:
    if policy is Policy.ADAPTIVE:
        return select_adaptive(candidates, problem, gateway, sandbox, cfg.seed,
                               probe_budget=cfg.probe_budget,
                               distinguish_budget=cfg.distinguish_budget)
    if policy is Policy.PUBLIC_ONLY:
        return select_public_only(candidates, problem, sandbox, cfg.seed)
    if policy is Policy.GENERATED_TESTS:
        return select_generated_tests(candidates, problem, gateway, sandbox, cfg.seed,
                                      budget=cfg.probe_budget)
    if policy is Policy.LLM_JUDGE:
        return select_llm_judge(candidates, problem, gateway, cfg.seed)
    if policy is Policy.MAJORITY_VOTE:
        return select_majority_vote(candidates, problem, gateway, sandbox, cfg.seed,
                                    probe_budget=cfg.probe_budget)
    if policy is Policy.ORACLE:
        return _oracle_report(candidates, problem, cfg.seed, private_verdicts)
    raise ConfigError(f"unknown policy {policy!r}")


def evaluate_problem(problem: Problem, cfg: RunConfig, gateway: Gateway,
                     sandbox: Sandbox) -> ProblemResult:
    """Stage 1, stage 2, then the private verdicts for one problem.

    The chosen candidate runs the full private suite without
    short-circuiting; the Pass@N indicator checks every candidate
    (short-circuiting on first failure, which cannot change a verdict).
    A HarnessError is isolated into an errored result so the run
    continues.
    """
    try:
        outcome = run_generation_stage(problem, cfg.gen, gateway, sandbox)
        candidates = outcome.candidates

        private_verdicts = [
            sandbox.execute_on_suite(c.source, problem, problem.private_tests, short_circuit=True).all_passed
            for c in candidates
        ]
        selection = _run_selection(cfg.policy, candidates, problem, gateway, sandbox, cfg, private_verdicts)
        chosen = candidates[selection.chosen_index]
        chosen_report = sandbox.execute_on_suite(chosen.source, problem, problem.private_tests)
        chosen_verdict = chosen_report.all_passed
        any_pass = any(private_verdicts)

        summaries = [
            {
                "sample_index": c.sample_index,
                "debug_round": c.debug_round,
                "debug_calls": c.debug_calls,
                "public_pass_fraction": c.public_pass_fraction,
                "source_sha": _source_digest(c.source),
                "passes_private": private_verdicts[i],
                "notes": c.notes,
            }
            for i, c in enumerate(candidates)
        ]
        return ProblemResult(
            problem_id=problem.id,
            difficulty=problem.difficulty,
            round_trace=outcome.round_trace,
            candidates=summaries,
            selection=selection,
            chosen_verdict=chosen_verdict,
            any_pass_private=any_pass,
        )
    except HarnessError as e:
        logger.error("harness failure on %s: %s", problem.id, e)
        return ProblemResult(
            problem_id=problem.id,
            difficulty=problem.difficulty,
            round_trace=[],
            candidates=[],
            selection=None,
            chosen_verdict=False,
            any_pass_private=False,
            error=str(e),
        )


def _aggregate(cfg: RunConfig, results: list[ProblemResult]) -> dict:
    by_difficulty = {}
    for bucket in _DIFFICULTY_ORDER:
        rows = [r for r in results if r.difficulty is bucket]
        if not rows:
            continue
        by_difficulty[bucket.value] = {
            "problems": len(rows),
            "pass_at_1": mean_or_none([r.chosen_verdict for r in rows]),
            "pass_at_n": mean_or_none([r.any_pass_private for r in rows]),
        }
    return {
        "policy": cfg.policy.value,
        "n_samples": cfg.gen.n_samples,
        "max_debug_rounds": cfg.gen.max_debug_rounds,
        "temperature": cfg.gen.temperature,
        "seed": cfg.seed,
        "problems": len(results),
        "pass_at_1": mean_or_none([r.chosen_verdict for r in results]),
        "pass_at_n": mean_or_none([r.any_pass_private for r in results]),
        "by_difficulty": by_difficulty,
    }


def aggregate_json(aggregate: dict) -> str:
    """Canonical aggregate text; replayed runs must match byte for byte."""
    return json.dumps(aggregate, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def run_benchmark(cfg: RunConfig, provider=None, sandbox: Sandbox | None = None) -> RunManifest:
    """Evaluate every problem in the dataset and persist the manifest.

    Problem records append to ``problems.jsonl`` as they finish; the
    aggregate and manifest land at the end (the manifest carries a
    truncation marker if the run died partway).
    """
    start = time.perf_counter()
    try:
        dataset = load_dataset(cfg.dataset_path)
    except Exception as e:
        raise ConfigError(f"cannot load dataset: {e}") from e

    gateway = build_gateway(cfg, provider)
    own_sandbox = sandbox is None
    sandbox = sandbox or build_sandbox(cfg)

    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    problems_fh = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        problems_fh = (out_dir / "problems.jsonl").open("w", encoding="utf-8")

    results: list[ProblemResult] = []
    complete = False
    try:
        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs, thread_name_prefix="sstar-prob") as pool:
                futures = [
                    pool.submit(evaluate_problem, p, cfg, gateway, sandbox)
                    for p in dataset.problems
                ]
                iterator = (f.result() for f in futures)
                for result in iterator:
                    results.append(result)
                    if problems_fh:
                        problems_fh.write(json.dumps(_result_record(result), ensure_ascii=False) + "\n")
                        problems_fh.flush()
        else:
            for problem in dataset.problems:
                result = evaluate_problem(problem, cfg, gateway, sandbox)
                results.append(result)
                if problems_fh:
                    problems_fh.write(json.dumps(_result_record(result), ensure_ascii=False) + "\n")
                    problems_fh.flush()
        complete = True
    finally:
        if problems_fh:
            problems_fh.close()
        wall = time.perf_counter() - start
        agg = _aggregate(cfg, results)
        provider_stats = {
            "calls": gateway.stats.calls,
            "cache_hits": gateway.stats.cache_hits,
            "successes": gateway.stats.provider_successes,
            "failures": gateway.stats.provider_failures,
        }
        manifest = RunManifest(
            config=cfg.snapshot(),
            results=results,
            aggregate=agg,
            template_versions=template_versions(),
            code_version=__version__,
            wall_clock_seconds=wall,
            complete=complete,
            provider_stats=provider_stats,
            executions=sandbox.executions,
        )
        if out_dir:
            (out_dir / "aggregate.json").write_text(aggregate_json(agg), encoding="utf-8")
            meta = {
                "config": manifest.config,
                "template_versions": manifest.template_versions,
                "code_version": manifest.code_version,
                "wall_clock_seconds": round(wall, 3),
                "complete": complete,
                "truncated": not complete,
                "provider_stats": provider_stats,
                "executions": sandbox.executions,
            }
            (out_dir / "manifest.json").write_text(
                json.dumps(meta, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
            )
        if own_sandbox:
            sandbox.close()
    return manifest


def _fmt(value: float | None) -> str:
    return "   n/a" if value is None else f"{value:6.3f}"


def report(manifest: RunManifest | str | Path, format: str = "table") -> str:
    """Render a finished run: a difficulty-breakdown table or aggregate JSON."""
    if isinstance(manifest, (str, Path)):
        agg_path = Path(manifest) / "aggregate.json"
        try:
            aggregate = json.loads(agg_path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read {agg_path}: {e}") from e
    else:
        aggregate = manifest.aggregate

    if format == "json":
        return aggregate_json(aggregate)
    if format != "table":
        raise ConfigError(f"unknown report format {format!r}")

    lines = [
        f"policy: {aggregate['policy']}   n: {aggregate['n_samples']}   "
        f"rounds: {aggregate['max_debug_rounds']}   temp: {aggregate['temperature']}   "
        f"seed: {aggregate['seed']}",
        f"{'difficulty':<12}{'problems':>9}{'pass@1':>9}{'pass@N':>9}",
    ]
    for bucket in [d.value for d in _DIFFICULTY_ORDER]:
        row = aggregate["by_difficulty"].get(bucket)
        if row is None:
            continue
        lines.append(
            f"{bucket:<12}{row['problems']:>9}{_fmt(row['pass_at_1']):>9}{_fmt(row['pass_at_n']):>9}"
        )
    lines.append(
        f"{'overall':<12}{aggregate['problems']:>9}"
        f"{_fmt(aggregate['pass_at_1']):>9}{_fmt(aggregate['pass_at_n']):>9}"
    )
    return "\n".join(lines) + "\n"
