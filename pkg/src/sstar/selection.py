"""Stage 2: pick the best candidate from the N finalists.

The centerpiece is adaptive input synthesis: cluster survivors by
behavior on model-proposed probe inputs, then run a round-robin
tournament between cluster representatives where a judge model sees
both sources plus real execution transcripts on inputs it chose to
separate exactly that pair. Verdicts count only when they survive a
presentation-order swap; everything else is a tie.

Also implements the comparison policies (public-only, generated tests,
plain LLM judge) and the majority-vote baseline, all fed from one
per-run seed via named sub-streams so policies compare on identical
candidate pools.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

from .gateway import (
    DEFAULT_MAX_TOKENS,
    ChatRequest,
    Gateway,
    PromptKind,
    ProviderError,
    extract_code,
    render_prompt,
)
from .generation import CandidateProgram, model_test_cases
from .problems import IoMode, Problem, TestSuite, Visibility
from .sandbox import ExecStatus, OutcomeSignature, Sandbox

logger = logging.getLogger(__name__)

__all__ = [
    "Verdict",
    "Cluster",
    "PairMatch",
    "JudgeOutcome",
    "SelectionReport",
    "check_report",
    "rng_for",
    "filter_by_public",
    "llm_test_input_gen",
    "cluster_candidates",
    "adaptive_pair_judge",
    "select_adaptive",
    "select_public_only",
    "select_generated_tests",
    "select_llm_judge",
    "select_majority_vote",
]

JUDGE_TEMPERATURE = 0.0


class Verdict:
    I = "i"
    J = "j"
    TIE = "tie"


@dataclass(frozen=True)
class Cluster:
    """Candidates sharing one outcome signature (None = no probe evidence)."""

    signature: OutcomeSignature | None
    member_indices: tuple[int, ...]
    representative: int

    def __post_init__(self):
        if not self.member_indices:
            raise ValueError("cluster must have members")
        if self.representative not in self.member_indices:
            raise ValueError("representative must be a member")


@dataclass(frozen=True)
class PairMatch:
    cluster_i: int
    cluster_j: int
    inputs: tuple[str, ...]
    transcript_i: tuple[dict, ...]
    transcript_j: tuple[dict, ...]
    verdict: str
    consistent: bool


@dataclass
class JudgeOutcome:
    verdict: str
    inputs: tuple[str, ...] = ()
    transcript_i: tuple[dict, ...] = ()
    transcript_j: tuple[dict, ...] = ()
    consistent: bool = True


@dataclass
class SelectionReport:
    policy: str
    clusters: list[Cluster]
    scores: list[float]
    winner_cluster: int
    chosen_index: int
    tournament: list[PairMatch] | None = None
    rng_seed: str = ""
    notes: list[str] = field(default_factory=list)


def check_report(report: SelectionReport) -> SelectionReport:
    """Structural invariants every report must satisfy; raises on violation."""
    if not 0 <= report.winner_cluster < len(report.clusters):
        raise ValueError("winner_cluster out of range")
    winner = report.clusters[report.winner_cluster]
    if report.chosen_index not in winner.member_indices:
        raise ValueError("chosen_index not in winner cluster")
    if report.scores:
        if len(report.scores) != len(report.clusters):
            raise ValueError("scores misaligned with clusters")
        if report.scores[report.winner_cluster] != max(report.scores):
            raise ValueError("winner cluster not in argmax(scores)")
    if report.tournament is not None:
        m = len(report.clusters)
        if len(report.tournament) != m * (m - 1) // 2:
            raise ValueError("tournament must have one match per unordered cluster pair")
    return report


def rng_for(seed: int, problem_id: str, policy: str) -> tuple[random.Random, str]:
    """Named RNG sub-stream per (problem, policy) off the single run seed."""
    digest = hashlib.sha256(f"{seed}|{problem_id}|{policy}".encode("utf-8")).hexdigest()
    return random.Random(int(digest[:16], 16)), digest[:16]


def _seeded_member_pick(rng: random.Random, candidates: Sequence[CandidateProgram],
                        members: Sequence[int]) -> int:
    # Draw over members ordered by program text so the pick is invariant
    # under candidate-order permutations (uniformity is unaffected).
    order = sorted(members, key=lambda i: (candidates[i].source, i))
    return order[rng.randrange(len(order))]


def filter_by_public(candidates: Sequence[CandidateProgram], problem: Problem,
                     sandbox: Sandbox) -> list[int]:
    """Indices passing all public tests; falls back to the max-fraction set.

    Recomputes fractions through the sandbox (memoized, so free after
    stage 1) and refreshes each candidate's recorded fraction.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    fractions = []
    for cand in candidates:
        report = sandbox.execute_on_suite(cand.source, problem, problem.public_tests)
        cand.public_pass_fraction = report.pass_fraction
        fractions.append(report.pass_fraction)
    best = max(fractions)
    return [i for i, f in enumerate(fractions) if f == best]


def llm_test_input_gen(problem: Problem, gateway: Gateway, k: int) -> list[str]:
    """Up to k model-proposed probe inputs, topped up with public inputs.

    Malformed proposals are dropped; on provider failure only the public
    inputs remain. May legitimately return fewer than k (or zero, for a
    problem with no public tests and an unusable completion).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    inputs = [case.input for case in model_test_cases(problem, gateway, k, temperature=JUDGE_TEMPERATURE)]
    for case in problem.public_tests.cases:
        if len(inputs) >= k:
            break
        if case.input not in inputs:
            inputs.append(case.input)
    return inputs[:k]


def cluster_candidates(candidates: Sequence[CandidateProgram], probe_inputs: Sequence[str],
                       sandbox: Sandbox, problem: Problem,
                       indices: Sequence[int] | None = None) -> list[Cluster]:
    """Partition by exact outcome-signature equality on the probe inputs.

    `indices` relabels members (used when clustering a filtered subset so
    reports keep original candidate indices). Representative is the
    lowest member; clusters are ordered by lowest member.
    """
    if not probe_inputs:
        raise ValueError("probe_inputs must be non-empty")
    labels = list(indices) if indices is not None else list(range(len(candidates)))
    if len(labels) != len(candidates):
        raise ValueError("indices must match candidates")
    groups: dict[OutcomeSignature, list[int]] = {}
    for cand, label in zip(candidates, labels):
        sig = sandbox.outcome_signature(cand.source, problem, probe_inputs)
        groups.setdefault(sig, []).append(label)
    clusters = [
        Cluster(signature=sig, member_indices=tuple(sorted(members)), representative=min(members))
        for sig, members in groups.items()
    ]
    clusters.sort(key=lambda c: c.member_indices[0])
    return clusters


def _clusters_or_single(candidates: Sequence[CandidateProgram], probes: Sequence[str],
                        sandbox: Sandbox, problem: Problem,
                        indices: Sequence[int]) -> list[Cluster]:
    # Zero probes carry zero behavioral information: the partition by
    # equality over an empty signature is a single class.
    if probes:
        subset = [candidates[i] for i in indices]
        return cluster_candidates(subset, probes, sandbox, problem, indices=indices)
    return [Cluster(signature=None, member_indices=tuple(sorted(indices)), representative=min(indices))]


def _transcript_json(transcript: Sequence[dict]) -> str:
    return json.dumps(list(transcript), sort_keys=True, ensure_ascii=False)


def _judge_once(gateway: Gateway, problem: Problem, source_a: str, source_b: str,
                transcript_a: str, transcript_b: str) -> str | None:
    """One PairJudge completion; returns 'A', 'B', 'TIE', or None."""
    ctx = {
        "description": problem.description,
        "source_a": source_a,
        "source_b": source_b,
        "transcript_a": transcript_a,
        "transcript_b": transcript_b,
    }
    req = ChatRequest(
        model_id=gateway.model_for(PromptKind.PAIR_JUDGE),
        messages=render_prompt(PromptKind.PAIR_JUDGE, ctx),
        temperature=JUDGE_TEMPERATURE,
        max_tokens=DEFAULT_MAX_TOKENS,
    )
    try:
        resp = gateway.complete(req)
    except ProviderError as e:
        logger.warning("pair judge call failed: %s", e)
        return None
    token = extract_code(resp.content).strip().upper()
    return token if token in ("A", "B", "TIE") else None


def _swap_consistent_judge(gateway: Gateway, problem: Problem, source_i: str, source_j: str,
                           transcript_i: str, transcript_j: str) -> tuple[str, bool]:
    """Judge twice with presentation order swapped; accept only agreement.

    Returns (verdict in {i, j, tie}, consistency flag). Any failure or
    disagreement under the swap degrades to a flagged tie.
    """
    first = _judge_once(gateway, problem, source_i, source_j, transcript_i, transcript_j)
    second = _judge_once(gateway, problem, source_j, source_i, transcript_j, transcript_i)
    if first is None or second is None:
        return Verdict.TIE, False
    as_winner = {"A": Verdict.I, "B": Verdict.J, "TIE": Verdict.TIE}
    swapped_winner = {"A": Verdict.J, "B": Verdict.I, "TIE": Verdict.TIE}
    v1, v2 = as_winner[first], swapped_winner[second]
    if v1 == v2:
        return v1, True
    return Verdict.TIE, False


def _distinguishing_inputs(problem: Problem, gateway: Gateway, source_i: str, source_j: str,
                           budget: int) -> list[str] | None:
    """Model-proposed separating inputs; None signals a provider failure."""
    ctx = {
        "description": problem.description,
        "source_a": source_i,
        "source_b": source_j,
        "budget": str(budget),
    }
    req = ChatRequest(
        model_id=gateway.model_for(PromptKind.DISTINGUISH_INPUT_GEN),
        messages=render_prompt(PromptKind.DISTINGUISH_INPUT_GEN, ctx),
        temperature=JUDGE_TEMPERATURE,
        max_tokens=DEFAULT_MAX_TOKENS,
    )
    try:
        resp = gateway.complete(req)
    except ProviderError as e:
        logger.warning("distinguishing-input generation failed: %s", e)
        return None
    try:
        parsed = json.loads(extract_code(resp.content))
    except json.JSONDecodeError:
        return []
    if not isinstance(parsed, list):
        return []
    inputs = []
    for item in parsed:
        if not isinstance(item, str):
            continue
        if problem.io_mode is IoMode.FUNCTION_CALL:
            try:
                if not isinstance(json.loads(item), list):
                    continue
            except json.JSONDecodeError:
                continue
        inputs.append(item)
        if len(inputs) >= budget:
            break
    return inputs


def adaptive_pair_judge(x_i: CandidateProgram, x_j: CandidateProgram, problem: Problem,
                        gateway: Gateway, sandbox: Sandbox,
                        distinguish_budget: int = 2) -> JudgeOutcome:
    """Execution-grounded pairwise comparison of two distinct candidates.

    Asks for inputs separating exactly this pair, executes both on them,
    and judges on sources plus transcripts with the order-swap
    consistency rule. Textually identical candidates tie immediately;
    unusable (but non-failing) input proposals fall back to public
    inputs; a provider failure at any step yields a flagged tie.
    """
    if x_i.source == x_j.source:
        return JudgeOutcome(verdict=Verdict.TIE, consistent=True)
    inputs = _distinguishing_inputs(problem, gateway, x_i.source, x_j.source, distinguish_budget)
    if inputs is None:
        return JudgeOutcome(verdict=Verdict.TIE, consistent=False)
    if not inputs:
        inputs = [c.input for c in problem.public_tests.cases[:distinguish_budget]]
    transcript_i = tuple(sandbox.transcript(x_i.source, problem, inputs)) if inputs else ()
    transcript_j = tuple(sandbox.transcript(x_j.source, problem, inputs)) if inputs else ()
    verdict, consistent = _swap_consistent_judge(
        gateway, problem, x_i.source, x_j.source,
        _transcript_json(transcript_i), _transcript_json(transcript_j),
    )
    return JudgeOutcome(
        verdict=verdict,
        inputs=tuple(inputs),
        transcript_i=transcript_i,
        transcript_j=transcript_j,
        consistent=consistent,
    )


def _run_tournament(clusters: list[Cluster], judge) -> tuple[list[float], list[PairMatch]]:
    """Round-robin over unordered cluster pairs; +1 win, +0.5 each for a tie."""
    scores = [0.0] * len(clusters)
    matches: list[PairMatch] = []
    for a, b in combinations(range(len(clusters)), 2):
        outcome = judge(clusters[a], clusters[b])
        if outcome.verdict == Verdict.I:
            scores[a] += 1.0
        elif outcome.verdict == Verdict.J:
            scores[b] += 1.0
        else:
            scores[a] += 0.5
            scores[b] += 0.5
        matches.append(PairMatch(
            cluster_i=a,
            cluster_j=b,
            inputs=outcome.inputs,
            transcript_i=outcome.transcript_i,
            transcript_j=outcome.transcript_j,
            verdict=outcome.verdict,
            consistent=outcome.consistent,
        ))
    return scores, matches


def _argmax_lowest(scores: list[float]) -> int:
    return scores.index(max(scores))


def select_adaptive(candidates: Sequence[CandidateProgram], problem: Problem, gateway: Gateway,
                    sandbox: Sandbox, seed: int, probe_budget: int = 8,
                    distinguish_budget: int = 2) -> SelectionReport:
    """Adaptive input synthesis selection (the full pipeline).

    Public filtering, probe generation, behavioral clustering, then the
    representative tournament; the winning cluster's member is drawn with
    the per-(problem, policy) seed stream.
    """
    rng, rng_hex = rng_for(seed, problem.id, "adaptive")
    survivors = filter_by_public(candidates, problem, sandbox)
    probes = llm_test_input_gen(problem, gateway, probe_budget)
    clusters = _clusters_or_single(candidates, probes, sandbox, problem, survivors)

    def judge(ci: Cluster, cj: Cluster) -> JudgeOutcome:
        return adaptive_pair_judge(
            candidates[ci.representative], candidates[cj.representative],
            problem, gateway, sandbox, distinguish_budget,
        )

    scores, matches = _run_tournament(clusters, judge)
    winner = _argmax_lowest(scores) if scores else 0
    chosen = _seeded_member_pick(rng, candidates, clusters[winner].member_indices)
    return check_report(SelectionReport(
        policy="adaptive",
        clusters=clusters,
        scores=scores,
        winner_cluster=winner,
        chosen_index=chosen,
        tournament=matches,
        rng_seed=rng_hex,
    ))


def select_public_only(candidates: Sequence[CandidateProgram], problem: Problem,
                       sandbox: Sandbox, seed: int) -> SelectionReport:
    """Public-test filtering followed by a seeded uniform pick; no scores."""
    rng, rng_hex = rng_for(seed, problem.id, "public-only")
    survivors = filter_by_public(candidates, problem, sandbox)
    cluster = Cluster(signature=None, member_indices=tuple(sorted(survivors)), representative=min(survivors))
    chosen = _seeded_member_pick(rng, candidates, survivors)
    return check_report(SelectionReport(
        policy="public-only",
        clusters=[cluster],
        scores=[],
        winner_cluster=0,
        chosen_index=chosen,
        rng_seed=rng_hex,
    ))


def select_generated_tests(candidates: Sequence[CandidateProgram], problem: Problem,
                           gateway: Gateway, sandbox: Sandbox, seed: int,
                           budget: int = 8) -> SelectionReport:
    """Score survivors by model-generated cases with predicted outputs.

    The predictions are trusted as expected values here, which is exactly
    the noise source this policy is known for; when no usable cases come
    back the policy degrades to public-only semantics (recorded).
    """
    rng, rng_hex = rng_for(seed, problem.id, "generated-tests")
    survivors = filter_by_public(candidates, problem, sandbox)
    cases = model_test_cases(problem, gateway, budget, temperature=JUDGE_TEMPERATURE)
    notes = []
    if not cases:
        notes.append("no usable generated tests; degraded to public-only semantics")

    clusters = [
        Cluster(signature=None, member_indices=(i,), representative=i)
        for i in sorted(survivors)
    ]
    scores = []
    suite = TestSuite(tuple(cases), Visibility.PUBLIC) if cases else None
    for cluster in clusters:
        cand = candidates[cluster.representative]
        if suite is None:
            scores.append(0.0)
            continue
        report = sandbox.execute_on_suite(cand.source, problem, suite)
        scores.append(float(sum(1 for r in report.results if r.status is ExecStatus.PASSED)))
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s == best]
    tied.sort(key=lambda ci: (candidates[clusters[ci].representative].source, ci))
    winner = tied[rng.randrange(len(tied))]
    return check_report(SelectionReport(
        policy="generated-tests",
        clusters=clusters,
        scores=scores,
        winner_cluster=winner,
        chosen_index=clusters[winner].representative,
        rng_seed=rng_hex,
        notes=notes,
    ))


def select_llm_judge(candidates: Sequence[CandidateProgram], problem: Problem,
                     gateway: Gateway, seed: int) -> SelectionReport:
    """Round-robin source-only judging over survivors (no execution evidence).

    Uses the public-pass fractions already recorded on the candidates
    (this policy deliberately runs nothing). Scoring and tie rules match
    the adaptive tournament, including the order-swap consistency check.
    """
    _, rng_hex = rng_for(seed, problem.id, "llm-judge")
    if not candidates:
        raise ValueError("candidates must be non-empty")
    best = max(c.public_pass_fraction for c in candidates)
    survivors = [i for i, c in enumerate(candidates) if c.public_pass_fraction == best]
    clusters = [Cluster(signature=None, member_indices=(i,), representative=i) for i in survivors]

    empty = _transcript_json(())

    def judge(ci: Cluster, cj: Cluster) -> JudgeOutcome:
        s_i = candidates[ci.representative].source
        s_j = candidates[cj.representative].source
        if s_i == s_j:
            return JudgeOutcome(verdict=Verdict.TIE, consistent=True)
        verdict, consistent = _swap_consistent_judge(gateway, problem, s_i, s_j, empty, empty)
        return JudgeOutcome(verdict=verdict, consistent=consistent)

    scores, matches = _run_tournament(clusters, judge)
    winner = _argmax_lowest(scores) if scores else 0
    chosen = clusters[winner].representative
    return check_report(SelectionReport(
        policy="llm-judge",
        clusters=clusters,
        scores=scores,
        winner_cluster=winner,
        chosen_index=chosen,
        tournament=matches,
        rng_seed=rng_hex,
    ))


def select_majority_vote(candidates: Sequence[CandidateProgram], problem: Problem,
                         gateway: Gateway, sandbox: Sandbox, seed: int,
                         probe_budget: int = 8) -> SelectionReport:
    """Largest behavioral cluster wins; no public-test filtering.

    The baseline clusters all N candidates on generated probe inputs,
    takes the biggest cluster (lowest-index tie-break), and picks a
    member with the seed stream.
    """
    rng, rng_hex = rng_for(seed, problem.id, "majority-vote")
    if not candidates:
        raise ValueError("candidates must be non-empty")
    probes = llm_test_input_gen(problem, gateway, probe_budget)
    clusters = _clusters_or_single(candidates, probes, sandbox, problem, list(range(len(candidates))))
    scores = [float(len(c.member_indices)) for c in clusters]
    winner = _argmax_lowest(scores)
    chosen = _seeded_member_pick(rng, candidates, clusters[winner].member_indices)
    return check_report(SelectionReport(
        policy="majority-vote",
        clusters=clusters,
        scores=scores,
        winner_cluster=winner,
        chosen_index=chosen,
        rng_seed=rng_hex,
    ))
