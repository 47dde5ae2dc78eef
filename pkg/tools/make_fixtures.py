#!/usr/bin/env python3
"""Regenerate the shipped fixture dataset, mock tape, and golden outputs.

Builds the 5-problem dataset, runs the full pipeline once against a
scripted deterministic provider while recording every (request key,
response) pair, and writes:

    fixtures/problems5.jsonl      the dataset
    fixtures/tape5.jsonl          strict-replay tape covering that run
    fixtures/golden_report.txt    rendered table for the run
    fixtures/expected_aggregate.json   aggregate section for the run

The run configuration here must stay in lockstep with the acceptance
suite's CLI invocation (policy adaptive, N=16, R=2, temp 0.7, seed 42,
default budgets); tape keys hash the full request, so any drift shows up
as a tape miss, never as silent wrong answers.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"

from sstar.gateway import ChatRequest, PromptKind, RecordingProvider, ScriptedProvider, detect_prompt_kind, save_tape
from sstar.generation import GenConfig
from sstar.harness import Policy, RunConfig, aggregate_json, report, run_benchmark
from sstar.problems import Dataset, Difficulty, IoMode, Problem, TestCase, TestSuite, Visibility, save_dataset


def _suite(pairs, visibility):
    return TestSuite(tuple(TestCase(i, o) for i, o in pairs), visibility)


def _problem(pid, description, publics, privates, difficulty=Difficulty.UNKNOWN,
             io_mode=IoMode.STDIN_STDOUT, entry_point=None):
    return Problem(
        id=pid,
        description=description,
        io_mode=io_mode,
        entry_point=entry_point,
        difficulty=difficulty,
        public_tests=_suite(publics, Visibility.PUBLIC),
        private_tests=_suite(privates, Visibility.PRIVATE),
    )


def build_dataset() -> Dataset:
    problems = (
        _problem(
            "fx-echo",
            "[fx-echo] Read one line from standard input and print it back unchanged.",
            publics=[("hello\n", "hello\n"), ("sstar\n", "sstar\n")],
            privates=[("alpha\n", "alpha\n"), ("beta gamma\n", "beta gamma\n"), ("42\n", "42\n")],
            difficulty=Difficulty.EASY,
        ),
        _problem(
            "fx-add1",
            "[fx-add1] Read one integer x and print x + 1.",
            publics=[("3\n", "4\n"), ("10\n", "11\n")],
            privates=[("0\n", "1\n"), ("-5\n", "-4\n"), ("100\n", "101\n")],
            difficulty=Difficulty.EASY,
        ),
        _problem(
            "fx-add",
            "[fx-add] Implement add(a, b) returning the sum of two integers.",
            publics=[("[2,3]", "5"), ("[0,0]", "0")],
            privates=[("[10,20]", "30"), ("[-1,1]", "0"), ("[7,8]", "15")],
            difficulty=Difficulty.MEDIUM,
            io_mode=IoMode.FUNCTION_CALL,
            entry_point="add",
        ),
        _problem(
            "fx-clamp",
            "[fx-clamp] Read one integer x and print max(x, 10).",
            publics=[("15\n", "15\n"), ("30\n", "30\n")],
            privates=[("3\n", "10\n"), ("10\n", "10\n"), ("25\n", "25\n")],
            difficulty=Difficulty.HARD,
        ),
        _problem(
            "fx-div",
            "[fx-div] Read two integers a and b and print the floor division a // b.",
            publics=[("6 3\n", "2\n"), ("9 3\n", "3\n")],
            privates=[("7 2\n", "3\n"), ("0 5\n", "0\n"), ("8 5\n", "1\n")],
        ),
    )
    return Dataset(name="problems5", problems=problems)


# Candidate sources per problem. Textual variants keep behavior identical
# so clustering has something to merge.

ECHO_SOURCES = ["print(input())", "import sys\nprint(sys.stdin.readline().rstrip('\\n'))"]
ADD1_BUGGY = "print(int(input()) + 2)"
ADD1_FIXED = "print(int(input()) + 1)"
ADD_CORRECT = ["def add(a, b):\n    return a + b", "def add(a, b):\n    s = a + b\n    return s"]
ADD_BUGGY = "def add(a, b):\n    return a - b"
CLAMP_WRONG = ["print(int(input()))", "x = int(input())\nprint(x)"]
CLAMP_RIGHT = ["print(max(int(input()), 10))", "x = int(input())\nprint(x if x > 10 else 10)"]
DIV_CRASHY = "a, b = map(int, input().split())\nprint(a / 0)"
DIV_ROUNDY = "a, b = map(int, input().split())\nprint(round(a / b))"

# Probe cases the scripted test generator proposes, with its output
# predictions (correct here; predictions are only debugging/scoring aids).
PROBES = {
    "fx-echo": [("probe line\n", "probe line"), ("zz top\n", "zz top")],
    "fx-add1": [("5\n", "6"), ("8\n", "9")],
    "fx-add": [("[1,2]", "3"), ("[5,5]", "10")],
    "fx-clamp": [("2\n", "10"), ("12\n", "12")],
    "fx-div": [("12 4\n", "3"), ("10 2\n", "5")],
}

# Reference behavior on the clamp probes; the scripted judge grounds its
# verdicts in transcript agreement with these, mirroring how a real judge
# is meant to lean on execution evidence.
CLAMP_REFERENCE = {"2\n": "10", "12\n": "12"}


def _fenced(text, lang=""):
    return f"```{lang}\n{text}\n```"


def _problem_id(req: ChatRequest) -> str:
    content = "\n".join(m.content for m in req.messages)
    for pid in PROBES:
        if f"[{pid}]" in content:
            return pid
    raise AssertionError("fixture prompt does not name a known problem")


def _generate(pid: str, tag: str) -> str:
    i = int(tag)
    if pid == "fx-echo":
        return _fenced(ECHO_SOURCES[i % 2])
    if pid == "fx-add1":
        return _fenced(ADD1_BUGGY)
    if pid == "fx-add":
        return _fenced(ADD_BUGGY if i % 4 == 0 else ADD_CORRECT[i % 2])
    if pid == "fx-clamp":
        # 10 of 16 samples share the plausible-but-wrong behavior
        return _fenced(CLAMP_WRONG[i % 2] if i < 10 else CLAMP_RIGHT[i % 2])
    if pid == "fx-div":
        return _fenced(DIV_CRASHY)
    raise AssertionError(pid)


def _debug(pid: str) -> str:
    if pid == "fx-add1":
        return _fenced(ADD1_FIXED)
    if pid == "fx-add":
        return _fenced(ADD_BUGGY)  # the model never finds this bug
    if pid == "fx-div":
        return _fenced(DIV_ROUNDY)  # fixes the crash, not the semantics
    raise AssertionError(f"unexpected debug prompt for {pid}")


def _test_input_gen(pid: str) -> str:
    cases = [{"input": i, "output": o} for i, o in PROBES[pid]]
    return _fenced(json.dumps(cases), "json")


def _distinguish(pid: str) -> str:
    inputs = [PROBES[pid][0][0]]
    return _fenced(json.dumps(inputs), "json")


def _judge(pid: str, req: ChatRequest) -> str:
    if pid != "fx-clamp":
        return _fenced("TIE")
    content = req.messages[1].content
    a_text = content.split("Program A transcript:\n", 1)[1].split("\nProgram B transcript:\n", 1)[0]
    b_text = content.split("\nProgram B transcript:\n", 1)[1].split("\n\nDecide which program", 1)[0]

    def score(text):
        entries = json.loads(text.strip())
        return sum(
            1 for e in entries
            if e["status"] == "OK" and CLAMP_REFERENCE.get(e["input"]) == e["output"]
        )

    sa, sb = score(a_text), score(b_text)
    if sa == sb:
        return _fenced("TIE")
    return _fenced("A" if sa > sb else "B")


def fixture_script(req: ChatRequest) -> str:
    kind = detect_prompt_kind(req)
    pid = _problem_id(req)
    if kind is PromptKind.GENERATE:
        return _generate(pid, req.sample_tag)
    if kind is PromptKind.DEBUG:
        return _debug(pid)
    if kind is PromptKind.TEST_INPUT_GEN:
        return _test_input_gen(pid)
    if kind is PromptKind.DISTINGUISH_INPUT_GEN:
        return _distinguish(pid)
    if kind is PromptKind.PAIR_JUDGE:
        return _judge(pid, req)
    raise AssertionError(f"unhandled prompt kind {kind}")


def run_config(dataset_path: Path, out_dir: Path) -> RunConfig:
    return RunConfig(
        dataset_path=str(dataset_path),
        policy=Policy.ADAPTIVE,
        gen=GenConfig(n_samples=16, max_debug_rounds=2, temperature=0.7),
        seed=42,
        out_dir=str(out_dir),
    )


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset()
    dataset_path = FIXTURES / "problems5.jsonl"
    save_dataset(dataset, dataset_path)

    recorder = RecordingProvider(ScriptedProvider(fixture_script))
    with tempfile.TemporaryDirectory(prefix="sstar-fixture-gen-") as scratch:
        cfg = run_config(dataset_path, Path(scratch) / "run")
        manifest = run_benchmark(cfg, provider=recorder)

    save_tape(recorder.records, FIXTURES / "tape5.jsonl")
    (FIXTURES / "golden_report.txt").write_text(report(manifest, "table"), encoding="utf-8")
    (FIXTURES / "expected_aggregate.json").write_text(aggregate_json(manifest.aggregate), encoding="utf-8")

    verdicts = {r.problem_id: r.chosen_verdict for r in manifest.results}
    print(f"tape entries: {len(recorder.records)}")
    print(f"verdicts: {verdicts}")
    print(f"aggregate: pass@1={manifest.aggregate['pass_at_1']}, pass@N={manifest.aggregate['pass_at_n']}")
    expected = {"fx-echo": True, "fx-add1": True, "fx-add": True, "fx-clamp": True, "fx-div": False}
    if verdicts != expected:
        print(f"ERROR: verdict vector drifted; expected {expected}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
