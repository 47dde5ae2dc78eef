"""End-to-end orchestration: verdicts, aggregates, manifests, reports."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sstar.gateway import ScriptedProvider
from sstar.generation import GenConfig
from sstar.harness import (
    ConfigError,
    Policy,
    RunConfig,
    aggregate_json,
    evaluate_problem,
    report,
    run_benchmark,
)
from sstar.problems import Dataset, Difficulty, save_dataset
from sstar.sandbox import HarnessError

from conftest import fenced, inline_sandbox, make_problem, oracle_judge, scripted_gateway

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

CLAMP_RIGHT = "print(max(int(input()), 10))"
CLAMP_WRONG = "print(int(input()))"


def planted_problem(pid, difficulty=Difficulty.UNKNOWN):
    """Wrong-majority pool: publics only cover the region both agree on."""
    return make_problem(
        pid,
        description=f"[{pid}] Read an integer x and print max(x, 10).",
        publics=(("15\n", "15\n"), ("30\n", "30\n")),
        privates=(("3\n", "10\n"), ("10\n", "10\n"), ("25\n", "25\n")),
        difficulty=difficulty,
    )


def planted_gateway():
    """Scripted provider for planted pools: 3 wrong, 1 right candidate."""
    probes = [{"input": "2\n", "output": "10"}, {"input": "12\n", "output": "12"}]

    def generate(req):
        return fenced(CLAMP_WRONG if req.sample_tag in ("0", "1", "2") else CLAMP_RIGHT)

    return scripted_gateway(
        generate=generate,
        test_input_gen=lambda req: fenced(json.dumps(probes), "json"),
        distinguish_input_gen=lambda req: fenced(json.dumps(["2\n"]), "json"),
        pair_judge=oracle_judge({"2\n": "10", "12\n": "12"}),
    )


def planted_config(dataset_path, policy, out_dir=None):
    return RunConfig(
        dataset_path=str(dataset_path),
        policy=policy,
        gen=GenConfig(n_samples=4, max_debug_rounds=0),
        seed=3,
        out_dir=str(out_dir) if out_dir else None,
    )


def write_planted_dataset(tmp_path, count=3):
    problems = tuple(planted_problem(f"plant-{i}") for i in range(count))
    path = tmp_path / "planted.jsonl"
    save_dataset(Dataset(name="planted", problems=problems), path)
    return path


# --- evaluate_problem ---------------------------------------------------------


def test_selection_can_lose_but_oracle_indicator_survives(sandbox):
    problem = planted_problem("plant-x")
    cfg = planted_config("unused", Policy.MAJORITY_VOTE)
    result = evaluate_problem(problem, cfg, planted_gateway(), sandbox)
    # the wrong behavior holds the majority, so majority vote picks wrong
    assert result.chosen_verdict is False
    assert result.any_pass_private is True
    assert result.any_pass_private >= result.chosen_verdict


def test_adaptive_wins_on_planted_pool(sandbox):
    problem = planted_problem("plant-x")
    cfg = planted_config("unused", Policy.ADAPTIVE)
    result = evaluate_problem(problem, cfg, planted_gateway(), sandbox)
    assert result.chosen_verdict is True


def test_all_candidates_fail_both_flags_false(sandbox):
    problem = make_problem("hopeless", publics=(("1\n", "2\n"),))
    gw = scripted_gateway(
        generate=lambda req: fenced("print(int(input()) + 5)"),
        test_input_gen=lambda req: fenced(json.dumps([]), "json"),
    )
    cfg = planted_config("unused", Policy.PUBLIC_ONLY)
    result = evaluate_problem(problem, cfg, gw, sandbox)
    assert result.chosen_verdict is False and result.any_pass_private is False


def test_oracle_policy_marks_any_pass(sandbox):
    problem = planted_problem("plant-x")
    cfg = planted_config("unused", Policy.ORACLE)
    result = evaluate_problem(problem, cfg, planted_gateway(), sandbox)
    assert result.chosen_verdict is True
    assert result.selection.policy == "oracle"
    assert result.chosen_verdict == result.any_pass_private


def test_harness_error_isolates_problem():
    class BrokenRunner:
        identity = "broken"

        def run(self, *args, **kwargs):
            raise HarnessError("no interpreter")

    from sstar.sandbox import Sandbox

    box = Sandbox(BrokenRunner(), workers=1)
    problem = make_problem()
    gw = scripted_gateway(generate=lambda req: fenced("print(1)"))
    cfg = planted_config("unused", Policy.PUBLIC_ONLY)
    result = evaluate_problem(problem, cfg, gw, box)
    assert result.error is not None
    assert result.chosen_verdict is False and result.any_pass_private is False
    box.close()


def test_candidate_summaries_track_debug_calls(sandbox):
    problem = make_problem("needs-fix", publics=(("3\n", "4\n"),))
    gw = scripted_gateway(
        generate=lambda req: fenced("print(int(input()) + 2)"),
        debug=lambda req: fenced("print(int(input()) + 1)"),
        test_input_gen=lambda req: fenced(json.dumps([]), "json"),
    )
    cfg = RunConfig(dataset_path="unused", policy=Policy.PUBLIC_ONLY,
                    gen=GenConfig(n_samples=2, max_debug_rounds=2), seed=0)
    result = evaluate_problem(problem, cfg, gw, sandbox)
    assert result.round_trace == [0, 2, 2]
    assert all(c["debug_calls"] == 1 for c in result.candidates)
    assert all(c["passes_private"] for c in result.candidates)


# --- run_benchmark -------------------------------------------------------------


def test_planted_run_adaptive_beats_public_only(tmp_path):
    dataset = write_planted_dataset(tmp_path)
    results = {}
    for policy in (Policy.ADAPTIVE, Policy.PUBLIC_ONLY):
        box = inline_sandbox()
        manifest = run_benchmark(planted_config(dataset, policy), provider=planted_gateway().provider, sandbox=box)
        results[policy] = manifest.aggregate["pass_at_1"]
        box.close()
    assert results[Policy.ADAPTIVE] == 1.0
    assert results[Policy.ADAPTIVE] >= results[Policy.PUBLIC_ONLY]


def test_pass1_never_exceeds_passN_and_per_problem(tmp_path):
    dataset = write_planted_dataset(tmp_path)
    for policy in (Policy.ADAPTIVE, Policy.PUBLIC_ONLY, Policy.MAJORITY_VOTE, Policy.ORACLE):
        box = inline_sandbox()
        manifest = run_benchmark(planted_config(dataset, policy), provider=planted_gateway().provider, sandbox=box)
        assert manifest.aggregate["pass_at_1"] <= manifest.aggregate["pass_at_n"]
        for result in manifest.results:
            assert result.any_pass_private >= result.chosen_verdict
        box.close()


def test_empty_dataset_reports_null_metrics(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    cfg = RunConfig(dataset_path=str(path), out_dir=str(tmp_path / "out"),
                    provider="mock", tape_path=None)
    cfg.provider = "mock"
    # empty dataset never touches the provider, so an empty tape suffices
    manifest = run_benchmark(cfg, provider=ScriptedProvider(lambda r: ""))
    assert manifest.aggregate["problems"] == 0
    assert manifest.aggregate["pass_at_1"] is None
    assert manifest.aggregate["pass_at_n"] is None
    agg = json.loads((tmp_path / "out" / "aggregate.json").read_text())
    assert agg["pass_at_1"] is None


def test_manifest_files_and_replay_byte_identity(tmp_path):
    dataset = write_planted_dataset(tmp_path)

    def run(out):
        box = inline_sandbox()
        manifest = run_benchmark(
            planted_config(dataset, Policy.ADAPTIVE, out_dir=out),
            provider=planted_gateway().provider, sandbox=box,
        )
        box.close()
        return manifest

    run(tmp_path / "a")
    run(tmp_path / "b")
    agg_a = (tmp_path / "a" / "aggregate.json").read_bytes()
    agg_b = (tmp_path / "b" / "aggregate.json").read_bytes()
    assert agg_a == agg_b
    problems_a = (tmp_path / "a" / "problems.jsonl").read_bytes()
    problems_b = (tmp_path / "b" / "problems.jsonl").read_bytes()
    assert problems_a == problems_b
    meta = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert meta["complete"] is True and meta["truncated"] is False
    assert meta["provider_stats"]["failures"] == 0
    assert set(meta["template_versions"]) == {
        "generate", "debug", "test_input_gen", "distinguish_input_gen", "pair_judge",
    }


def test_interrupted_run_writes_truncation_marker(tmp_path):
    dataset = write_planted_dataset(tmp_path, count=3)
    calls = {"n": 0}

    def explosive(req):
        calls["n"] += 1
        if calls["n"] > 6:  # lets the first problem finish, then dies
            raise RuntimeError("synthetic crash")
        return planted_gateway().provider.script(req)

    out = tmp_path / "out"
    cfg = planted_config(dataset, Policy.PUBLIC_ONLY, out_dir=out)
    with pytest.raises(RuntimeError):
        run_benchmark(cfg, provider=ScriptedProvider(explosive))
    meta = json.loads((out / "manifest.json").read_text())
    assert meta["truncated"] is True and meta["complete"] is False
    finished = (out / "problems.jsonl").read_text().splitlines()
    assert 1 <= len(finished) < 3


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        run_benchmark(RunConfig(dataset_path=str(tmp_path / "missing.jsonl")))
    dataset = write_planted_dataset(tmp_path)
    with pytest.raises(ConfigError):
        run_benchmark(RunConfig(dataset_path=str(dataset), provider="mock", tape_path=None))


# --- report rendering ------------------------------------------------------------


def fixture_manifest(tmp_path):
    dataset = write_planted_dataset(tmp_path)
    problems = tuple(
        planted_problem(f"plant-{d.value}", difficulty=d)
        for d in (Difficulty.EASY, Difficulty.MEDIUM, Difficulty.HARD)
    )
    path = tmp_path / "difficulties.jsonl"
    save_dataset(Dataset(name="d", problems=problems), path)
    box = inline_sandbox()
    manifest = run_benchmark(
        planted_config(path, Policy.ADAPTIVE, out_dir=tmp_path / "out"),
        provider=planted_gateway().provider, sandbox=box,
    )
    box.close()
    return manifest


def test_report_table_has_difficulty_rows_and_overall(tmp_path):
    manifest = fixture_manifest(tmp_path)
    table = report(manifest, "table")
    for token in ("easy", "medium", "hard", "overall"):
        assert token in table
    assert "unknown" not in table


def test_report_json_round_trips(tmp_path):
    manifest = fixture_manifest(tmp_path)
    rendered = report(manifest, "json")
    assert json.loads(rendered) == manifest.aggregate
    assert rendered == aggregate_json(manifest.aggregate)
    from_dir = report(tmp_path / "out", "json")
    assert from_dir == rendered


def test_report_rejects_unknown_format(tmp_path):
    manifest = fixture_manifest(tmp_path)
    with pytest.raises(ConfigError):
        report(manifest, "yaml")


# --- metric laws -----------------------------------------------------------------


@settings(max_examples=1000)
@given(st.lists(st.booleans(), min_size=1, max_size=30))
def test_passN_indicator_monotone_under_extension(verdicts):
    indicators = [any(verdicts[: i + 1]) for i in range(len(verdicts))]
    assert all(a <= b for a, b in zip(indicators, indicators[1:]))
