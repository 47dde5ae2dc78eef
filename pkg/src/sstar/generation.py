"""Stage 1: parallel candidate sampling plus iterative debugging.

Produces N candidates from identical prompts under distinct sample tags,
then refines each lineage independently for up to R rounds against
public-test execution feedback. A lineage halts as soon as it passes all
public tests (vacuously true for a problem with no public tests), so
already-correct samples cost zero debug completions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum

from .gateway import (
    DEFAULT_MAX_TOKENS,
    ChatRequest,
    Gateway,
    Message,
    PromptKind,
    ProviderError,
    apply_sample_tag,
    extract_code,
    render_prompt,
)
from .problems import IoMode, Problem, TestCase, TestSuite, Visibility
from .sandbox import Sandbox, failure_summary

logger = logging.getLogger(__name__)

__all__ = [
    "DebugVariant",
    "GenConfig",
    "HistoryEvent",
    "CandidateProgram",
    "GenerationOutcome",
    "generate_initial_samples",
    "debug_round",
    "run_generation_stage",
    "model_test_cases",
    "problem_prompt_context",
]


class DebugVariant(str, Enum):
    PUBLIC_TESTS = "public"
    PLUS_GENERATED_TESTS = "plus-generated"
    LAST_ROUND_CONTEXT = "last-round"


@dataclass
class GenConfig:
    n_samples: int = 16
    max_debug_rounds: int = 2
    temperature: float = 0.7
    debug_variant: DebugVariant = DebugVariant.PUBLIC_TESTS
    generated_test_budget: int = 4

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_debug_rounds < 0:
            raise ValueError("max_debug_rounds must be >= 0")
        if self.generated_test_budget < 0:
            raise ValueError("generated_test_budget must be >= 0")


@dataclass
class HistoryEvent:
    """One generation event: the request sent, the reply, and what running
    the extracted program showed (filled in after evaluation)."""

    prompt: tuple[Message, ...]
    response: str
    feedback: str | None = None


@dataclass
class CandidateProgram:
    source: str
    sample_index: int
    debug_round: int = 0
    history: list[HistoryEvent] = field(default_factory=list)
    public_pass_fraction: float = 0.0
    notes: list[str] = field(default_factory=list)
    debug_calls: int = 0


@dataclass
class GenerationOutcome:
    candidates: list[CandidateProgram]
    round_trace: list[int]


def _format_examples(suite: TestSuite) -> str:
    if len(suite) == 0:
        return "(none)"
    blocks = []
    for i, case in enumerate(suite.cases, start=1):
        blocks.append(f"Example {i}\nInput:\n{case.input}\nExpected output:\n{case.expected_output}")
    return "\n\n".join(blocks)


def _io_section(problem: Problem) -> str:
    if problem.io_mode is IoMode.STDIN_STDOUT:
        return "The program reads from standard input and writes its answer to standard output."
    section = (
        f"Implement the function `{problem.entry_point}`. Each test input is a JSON array of "
        "positional arguments; the return value is compared as canonical JSON."
    )
    if problem.starter_code:
        section += f"\n\nStarter code:\n{problem.starter_code}"
    return section


def problem_prompt_context(problem: Problem) -> dict[str, str]:
    """Shared placeholder fields for prompts that describe a problem."""
    return {
        "description": problem.description,
        "io_section": _io_section(problem),
        "examples": _format_examples(problem.public_tests),
    }


def generate_initial_samples(problem: Problem, cfg: GenConfig, gateway: Gateway) -> list[CandidateProgram]:
    """Request N completions of one Generate prompt under distinct tags.

    A provider failure on one sample yields an empty-source candidate
    (fails everything downstream) instead of aborting the batch; N stays
    fixed, as the selection tournament expects.
    """
    base = render_prompt(PromptKind.GENERATE, problem_prompt_context(problem))
    model = gateway.model_for(PromptKind.GENERATE)
    candidates = []
    for i in range(cfg.n_samples):
        tag = str(i)
        req = ChatRequest(
            model_id=model,
            messages=apply_sample_tag(base, tag),
            temperature=cfg.temperature,
            max_tokens=DEFAULT_MAX_TOKENS,
            sample_tag=tag,
        )
        cand = CandidateProgram(source="", sample_index=i)
        try:
            resp = gateway.complete(req)
            cand.source = extract_code(resp.content)
            cand.history.append(HistoryEvent(prompt=req.messages, response=resp.content))
        except ProviderError as e:
            logger.warning("sample %d failed at generation: %s", i, e)
            cand.notes.append(f"generation provider failure: {e}")
            cand.history.append(HistoryEvent(prompt=req.messages, response=""))
        candidates.append(cand)
    return candidates


def model_test_cases(problem: Problem, gateway: Gateway, budget: int,
                     temperature: float = 0.0) -> list[TestCase]:
    """One TestInputGen completion parsed into (input, predicted output) cases.

    Inputs that violate the problem's input convention are dropped
    (FunctionCall inputs must be JSON arrays). Predicted outputs are
    model guesses: useful for debugging and scoring, never for final
    correctness. Provider failure or an unparsable reply yields [].
    """
    if budget < 1:
        return []
    ctx = problem_prompt_context(problem)
    ctx["budget"] = str(budget)
    messages = render_prompt(PromptKind.TEST_INPUT_GEN, ctx)
    req = ChatRequest(
        model_id=gateway.model_for(PromptKind.TEST_INPUT_GEN),
        messages=messages,
        temperature=temperature,
        max_tokens=DEFAULT_MAX_TOKENS,
    )
    try:
        resp = gateway.complete(req)
    except ProviderError as e:
        logger.warning("test-case generation failed for %s: %s", problem.id, e)
        return []
    try:
        parsed = json.loads(extract_code(resp.content))
    except json.JSONDecodeError:
        return []
    if not isinstance(parsed, list):
        return []
    cases: list[TestCase] = []
    for item in parsed:
        if isinstance(item, str):
            inp, out = item, ""
        elif isinstance(item, dict) and isinstance(item.get("input"), str):
            inp, out = item["input"], item.get("output", "")
            if not isinstance(out, str):
                out = json.dumps(out, separators=(",", ":"), ensure_ascii=False)
        else:
            continue
        if problem.io_mode is IoMode.FUNCTION_CALL:
            try:
                if not isinstance(json.loads(inp), list):
                    continue
            except json.JSONDecodeError:
                continue
        cases.append(TestCase(input=inp, expected_output=out))
        if len(cases) >= budget:
            break
    return cases


def _debug_user_turn(problem: Problem, source: str, failing_input: str,
                     expected: str, observed: str) -> tuple[Message, ...]:
    ctx = {
        "description": problem.description,
        "source": source,
        "failing_input": failing_input[:4096],
        "expected_output": expected[:4096],
        "observed": observed[:4096],
    }
    return render_prompt(PromptKind.DEBUG, ctx)


def debug_round(candidate: CandidateProgram, problem: Problem, cfg: GenConfig,
                gateway: Gateway, sandbox: Sandbox,
                generated_tests: list[TestCase] | None = None) -> CandidateProgram:
    """One revision attempt; identity when the candidate already passes.

    Feedback is the first failing case in suite order (input, expected,
    observed output or terminal error line), so prompts are bounded and
    deterministic. The PlusGeneratedTests variant keeps debugging against
    model-generated cases once the public suite passes.
    """
    if candidate.debug_round >= cfg.max_debug_rounds:
        raise ValueError("candidate already at the debug-round cap")

    public_report = sandbox.execute_on_suite(candidate.source, problem, problem.public_tests)
    candidate.public_pass_fraction = public_report.pass_fraction
    failing_case: TestCase | None = None
    observed = ""
    if not public_report.all_passed:
        idx = public_report.first_failure
        assert idx is not None
        failing_case = problem.public_tests.cases[idx]
        observed = failure_summary(public_report.results[idx])
    elif cfg.debug_variant is DebugVariant.PLUS_GENERATED_TESTS and generated_tests:
        gen_suite = TestSuite(tuple(generated_tests), Visibility.PUBLIC)
        gen_report = sandbox.execute_on_suite(candidate.source, problem, gen_suite)
        if not gen_report.all_passed:
            idx = gen_report.first_failure
            assert idx is not None
            failing_case = generated_tests[idx]
            observed = failure_summary(gen_report.results[idx])

    if failing_case is None:
        return candidate  # halting rule: nothing left to fix

    if candidate.history and candidate.history[-1].feedback is None:
        candidate.history[-1].feedback = observed

    system_and_user = _debug_user_turn(
        problem, candidate.source, failing_case.input, failing_case.expected_output, observed
    )
    if cfg.debug_variant is DebugVariant.LAST_ROUND_CONTEXT or not candidate.history:
        messages = system_and_user
    else:
        # Full-lineage threading: prior request, its reply, then the new turn.
        last = candidate.history[-1]
        messages = last.prompt + (Message("assistant", last.response), system_and_user[1])

    tag = f"{candidate.sample_index}:{candidate.debug_round + 1}"
    req = ChatRequest(
        model_id=gateway.model_for(PromptKind.DEBUG),
        messages=messages,
        temperature=cfg.temperature,
        max_tokens=DEFAULT_MAX_TOKENS,
        sample_tag=tag,
    )
    candidate.debug_calls += 1
    try:
        resp = gateway.complete(req)
    except ProviderError as e:
        logger.warning("debug round failed for sample %d: %s", candidate.sample_index, e)
        candidate.notes.append(f"debug provider failure at round {candidate.debug_round + 1}: {e}")
        return candidate

    revised = CandidateProgram(
        source=extract_code(resp.content),
        sample_index=candidate.sample_index,
        debug_round=candidate.debug_round + 1,
        history=candidate.history + [HistoryEvent(prompt=req.messages, response=resp.content)],
        notes=candidate.notes,
        debug_calls=candidate.debug_calls,
    )
    revised.public_pass_fraction = sandbox.execute_on_suite(
        revised.source, problem, problem.public_tests
    ).pass_fraction
    return revised


def _halted(candidate: CandidateProgram, problem: Problem, cfg: GenConfig,
            sandbox: Sandbox, generated_tests: list[TestCase] | None) -> bool:
    if candidate.public_pass_fraction < 1.0:
        return False
    if cfg.debug_variant is DebugVariant.PLUS_GENERATED_TESTS and generated_tests:
        gen_suite = TestSuite(tuple(generated_tests), Visibility.PUBLIC)
        return sandbox.execute_on_suite(candidate.source, problem, gen_suite).all_passed
    return True


def run_generation_stage(problem: Problem, cfg: GenConfig, gateway: Gateway,
                         sandbox: Sandbox) -> GenerationOutcome:
    """Generate N samples, then debug each lineage until halt or R rounds.

    The round trace records how many candidates pass the public suite
    after the initial round and after each debug round (length R + 1).
    """
    candidates = generate_initial_samples(problem, cfg, gateway)
    generated_tests: list[TestCase] | None = None
    if cfg.debug_variant is DebugVariant.PLUS_GENERATED_TESTS and cfg.generated_test_budget > 0:
        generated_tests = model_test_cases(problem, gateway, cfg.generated_test_budget)

    for cand in candidates:
        report = sandbox.execute_on_suite(cand.source, problem, problem.public_tests)
        cand.public_pass_fraction = report.pass_fraction
        if cand.history and not report.all_passed:
            idx = report.first_failure
            cand.history[-1].feedback = failure_summary(report.results[idx]) if idx is not None else None

    trace = [sum(1 for c in candidates if c.public_pass_fraction == 1.0)]
    for _ in range(cfg.max_debug_rounds):
        for i, cand in enumerate(candidates):
            if cand.debug_round >= cfg.max_debug_rounds:
                continue
            if _halted(cand, problem, cfg, sandbox, generated_tests):
                continue
            candidates[i] = debug_round(cand, problem, cfg, gateway, sandbox, generated_tests)
        trace.append(sum(1 for c in candidates if c.public_pass_fraction == 1.0))
    return GenerationOutcome(candidates=candidates, round_trace=trace)
