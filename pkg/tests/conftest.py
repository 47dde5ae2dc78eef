"""Shared builders: problems, scripted providers, fast sandboxes."""

from __future__ import annotations

import json

import pytest

from sstar.gateway import ChatRequest, Gateway, PromptKind, ScriptedProvider, detect_prompt_kind
from sstar.generation import CandidateProgram
from sstar.problems import Difficulty, IoMode, Problem, TestCase, TestSuite, Visibility
from sstar.sandbox import ExecLimits, InlinePythonRunner, Sandbox


def suite(pairs, visibility=Visibility.PUBLIC):
    return TestSuite(tuple(TestCase(i, o) for i, o in pairs), visibility)


def make_problem(
    pid="p1",
    description="Read one integer x and print x + 1.",
    publics=(("3\n", "4\n"),),
    privates=(("10\n", "11\n"),),
    io_mode=IoMode.STDIN_STDOUT,
    entry_point=None,
    difficulty=Difficulty.UNKNOWN,
):
    return Problem(
        id=pid,
        description=description,
        io_mode=io_mode,
        entry_point=entry_point,
        public_tests=suite(publics, Visibility.PUBLIC),
        private_tests=suite(privates, Visibility.PRIVATE),
        difficulty=difficulty,
    )


def make_candidates(sources):
    return [CandidateProgram(source=s, sample_index=i) for i, s in enumerate(sources)]


def inline_sandbox(**kwargs) -> Sandbox:
    kwargs.setdefault("limits", ExecLimits(wall_timeout=5.0))
    kwargs.setdefault("workers", 1)
    return Sandbox(InlinePythonRunner(), **kwargs)


def fenced(text: str, lang: str = "") -> str:
    return f"```{lang}\n{text}\n```"


class KindScript:
    """Scripted provider body that dispatches on the rendered prompt kind.

    Handlers get the ChatRequest and return the raw response text.
    Unhandled kinds fail loudly so tests never silently exercise the
    wrong path.
    """

    def __init__(self, **handlers):
        self.handlers = {}
        for name, fn in handlers.items():
            self.handlers[PromptKind[name.upper()]] = fn

    def __call__(self, req: ChatRequest) -> str:
        kind = detect_prompt_kind(req)
        if kind is None or kind not in self.handlers:
            raise AssertionError(f"no scripted handler for prompt kind {kind}")
        return self.handlers[kind](req)


def scripted_gateway(models="mock-model", **handlers) -> Gateway:
    return Gateway(ScriptedProvider(KindScript(**handlers)), models=models)


def parse_judge_prompt(req: ChatRequest):
    """Recover (transcript_a, transcript_b) from a rendered PairJudge request."""
    content = req.messages[1].content
    after_a = content.split("Program A transcript:\n", 1)[1]
    a_text, rest = after_a.split("\nProgram B transcript:\n", 1)
    b_text = rest.split("\n\nDecide which program", 1)[0]
    return json.loads(a_text.strip()), json.loads(b_text.strip())


def ranked_judge(ranking):
    """Swap-consistent judge preferring the source with the lower rank."""

    def handler(req):
        a, b = parse_pair_sources(req)
        ra, rb = ranking.index(a), ranking.index(b)
        if ra == rb:
            return fenced("TIE")
        return fenced("A" if ra < rb else "B")

    return handler


def oracle_judge(reference):
    """Execution-grounded judge: prefer the transcript matching `reference`.

    `reference` maps probe input -> expected normalized output, the kind
    of ground truth you get by running a known-good solution.
    """

    def handler(req):
        ta, tb = parse_judge_prompt(req)

        def score(transcript):
            return sum(
                1 for entry in transcript
                if entry["status"] == "OK" and reference.get(entry["input"]) == entry["output"]
            )

        sa, sb = score(ta), score(tb)
        if sa == sb:
            return fenced("TIE")
        return fenced("A" if sa > sb else "B")

    return handler


def parse_pair_sources(req: ChatRequest):
    """Recover (source_a, source_b) from PairJudge or DistinguishInputGen."""
    content = req.messages[1].content
    after_a = content.split("Program A:\n", 1)[1]
    source_a, rest = after_a.split("\n\nProgram B:\n", 1)
    for stop in ("\n\nExecution transcripts", "\n\nPropose up to"):
        if stop in rest:
            return source_a, rest.split(stop, 1)[0]
    return source_a, rest


@pytest.fixture
def sandbox():
    box = inline_sandbox()
    yield box
    box.close()
