"""Candidate execution under resource limits, output comparison, signatures.

A Runner is a pluggable process-shaped executor. The process contract:

    runner-argv... SOURCE_PATH INPUT_PATH IO_MODE [ENTRY_POINT]

The runner writes candidate stdout to its stdout and candidate stderr to
its stderr, exits 0 on clean completion, 1 on candidate exception, 2 on
runner-internal failure, and prints a final stderr line
``SSTAR_STATUS:<ok|exc|harness>`` for unambiguous classification. The
memory cap is conveyed via the SSTAR_MEMORY_MB environment variable.
Runners must be deterministic for deterministic programs.

The built-in stub runner (``stub_runner()``) satisfies the contract with
a fresh host interpreter per execution; no external component is needed
to run the test suite.
"""

from __future__ import annotations

import io
import json
import math
import os
import signal
import subprocess
import sys
import tempfile
import threading
import time
import traceback
from concurrent.futures import Future, ThreadPoolExecutor
from contextlib import redirect_stdout
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

from .problems import IoMode, Problem, TestSuite

__all__ = [
    "ExecLimits",
    "ExecStatus",
    "ExecutionResult",
    "RawOutcome",
    "OutcomeSignature",
    "HarnessError",
    "Runner",
    "SubprocessRunner",
    "InlinePythonRunner",
    "stub_runner",
    "normalize_output",
    "compare_outputs",
    "failure_summary",
    "run_candidate",
    "execute_on_suite",
    "outcome_signature",
    "SuiteReport",
    "Sandbox",
]

TRAILER_PREFIX = "SSTAR_STATUS:"

# Signature status classes. WrongAnswer/OK collapse on purpose: signatures
# never see expected outputs, only raw behavior.
SIG_OK = "OK"
SIG_ERR = "ERR"
SIG_TIMEOUT = "TIMEOUT"

# An outcome signature is one (status class, normalized stdout) entry per
# probe input; equality is element-wise tuple equality.
OutcomeSignature = tuple[tuple[str, str], ...]


class HarnessError(Exception):
    """The runner itself failed; distinct from any candidate failure."""


@dataclass(frozen=True)
class ExecLimits:
    wall_timeout: float = 6.0
    memory_cap_mib: int = 512
    max_output_bytes: int = 1 << 20

    def __post_init__(self):
        if self.wall_timeout <= 0 or self.memory_cap_mib <= 0 or self.max_output_bytes <= 0:
            raise ValueError("all execution limits must be strictly positive")


class ExecStatus(str, Enum):
    PASSED = "passed"
    WRONG_ANSWER = "wrong_answer"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    OUTPUT_TRUNCATED = "output_truncated"
    HARNESS_ERROR = "harness_error"


@dataclass(frozen=True)
class ExecutionResult:
    status: ExecStatus
    stdout: str
    stderr: str
    duration: float


@dataclass(frozen=True)
class RawOutcome:
    """What one runner invocation produced, before any verdict is attached."""

    exit_code: int | None
    stdout: str
    stderr: str
    duration: float
    truncated: bool
    timed_out: bool
    trailer: str | None


class Runner(Protocol):
    identity: str

    def run(self, source: str, io_mode: IoMode, entry_point: str | None,
            input_text: str, limits: ExecLimits) -> RawOutcome: ...


def normalize_output(raw: str) -> str:
    """CRLF to LF, strip trailing whitespace per line, drop trailing blanks.

    Deterministic and idempotent; the canonical form both sides of every
    output comparison pass through.
    """
    lines = [line.rstrip() for line in raw.replace("\r\n", "\n").split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def _try_float(token: str) -> float | None:
    try:
        return float(token)
    except ValueError:
        return None


def compare_outputs(actual: str, expected: str, numeric_tol: float | None = None) -> bool:
    """Normalized exact match; numeric tokens compare within tolerance when set.

    With a tolerance, both texts are whitespace-tokenized, token counts
    must match, numeric tokens compare with relative tolerance, and
    anything else compares exactly.
    """
    a, e = normalize_output(actual), normalize_output(expected)
    if a == e:
        return True
    if numeric_tol is None:
        return False
    a_tokens, e_tokens = a.split(), e.split()
    if len(a_tokens) != len(e_tokens):
        return False
    for at, et in zip(a_tokens, e_tokens):
        af, ef = _try_float(at), _try_float(et)
        if af is not None and ef is not None:
            if not math.isclose(af, ef, rel_tol=numeric_tol, abs_tol=numeric_tol):
                return False
        elif at != et:
            return False
    return True


class SubprocessRunner:
    """Spawns the runner command per execution inside an isolated temp dir.

    Kills the whole process group at the wall timeout (runners may spawn
    interpreter children), captures stdout/stderr up to the output cap
    while always preserving the stderr tail so the status trailer
    survives truncation.
    """

    def __init__(self, command: Sequence[str], identity: str | None = None):
        if not command:
            raise ValueError("runner command must be non-empty")
        self.command = tuple(str(c) for c in command)
        self.identity = identity or " ".join(self.command)

    def run(self, source: str, io_mode: IoMode, entry_point: str | None,
            input_text: str, limits: ExecLimits) -> RawOutcome:
        with tempfile.TemporaryDirectory(prefix="sstar-exec-") as workdir:
            source_path = Path(workdir) / "solution.py"
            input_path = Path(workdir) / "input.txt"
            source_path.write_text(source, encoding="utf-8")
            input_path.write_text(input_text, encoding="utf-8")
            argv = list(self.command) + [str(source_path), str(input_path), io_mode.value]
            if entry_point is not None:
                argv.append(entry_point)
            env = dict(os.environ, SSTAR_MEMORY_MB=str(limits.memory_cap_mib))
            return _run_process(argv, limits, cwd=workdir, env=env)


def _drain(stream, cap: int, head: bytearray, tail: bytearray, flags: dict, flag_key: str) -> None:
    # Keep the head up to `cap` bytes plus a bounded tail, so the trailer
    # line survives even when a candidate floods stderr.
    tail_cap = 4096
    while True:
        chunk = stream.read(65536)
        if not chunk:
            return
        if len(head) < cap:
            head.extend(chunk[: cap - len(head)])
            if len(head) >= cap:
                flags[flag_key] = True
        else:
            flags[flag_key] = True
        tail.extend(chunk)
        if len(tail) > tail_cap:
            del tail[: len(tail) - tail_cap]


def _split_trailer(stderr_text: str) -> tuple[str, str | None]:
    lines = stderr_text.splitlines()
    for i in range(len(lines) - 1, -1, -1):
        if lines[i].strip():
            if lines[i].startswith(TRAILER_PREFIX):
                trailer = lines[i][len(TRAILER_PREFIX):].strip()
                return "\n".join(lines[:i]), trailer
            return stderr_text, None
    return stderr_text, None


def _run_process(argv: Sequence[str], limits: ExecLimits, cwd: str, env: dict) -> RawOutcome:
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=cwd,
            env=env,
            start_new_session=True,
        )
    except OSError as e:
        raise HarnessError(f"failed to spawn runner {argv[0]!r}: {e}") from e

    out_head, out_tail = bytearray(), bytearray()
    err_head, err_tail = bytearray(), bytearray()
    flags = {"out": False, "err": False}
    readers = [
        threading.Thread(target=_drain, args=(proc.stdout, limits.max_output_bytes, out_head, out_tail, flags, "out")),
        threading.Thread(target=_drain, args=(proc.stderr, limits.max_output_bytes, err_head, err_tail, flags, "err")),
    ]
    for t in readers:
        t.start()

    timed_out = False
    try:
        proc.wait(timeout=limits.wall_timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()
        proc.wait()
    for t in readers:
        t.join()
    duration = time.perf_counter() - start

    stdout = out_head.decode("utf-8", errors="replace")
    stderr_full = err_head.decode("utf-8", errors="replace")
    tail_text = err_tail.decode("utf-8", errors="replace")
    stderr, trailer = _split_trailer(stderr_full)
    if trailer is None and flags["err"]:
        # Head was cut; the trailer, if any, lives in the tail buffer.
        _, trailer = _split_trailer(tail_text)
    return RawOutcome(
        exit_code=proc.returncode,
        stdout=stdout,
        stderr=stderr,
        duration=duration,
        truncated=flags["out"] or flags["err"],
        timed_out=timed_out,
        trailer=trailer,
    )


def stub_runner() -> SubprocessRunner:
    """Built-in contract-conformant runner: fresh host interpreter per case.

    Invokes the stub shim by file path rather than ``-m`` so the child
    skips package import entirely; spawn cost is what bounds a full
    benchmark run.
    """
    shim_path = Path(__file__).with_name("stub_shim.py")
    return SubprocessRunner([sys.executable, str(shim_path)], identity="stub")


class InlinePythonRunner:
    """In-process execution for trusted, deterministic candidates.

    No wall-timeout or memory enforcement (there is no process to kill),
    so only use it for synthetic experiments and property tests where
    every candidate is known to terminate. Orders of magnitude faster
    than spawning interpreters; executions are serialized because the
    interpreter's stdio is swapped while a candidate runs.
    """

    identity = "inline-python"

    def __init__(self):
        self._lock = threading.Lock()

    def run(self, source: str, io_mode: IoMode, entry_point: str | None,
            input_text: str, limits: ExecLimits) -> RawOutcome:
        start = time.perf_counter()
        out_buf = io.StringIO()
        err_lines: list[str] = []
        exit_code = 0
        trailer = "ok"
        with self._lock:
            old_stdin = sys.stdin
            sys.stdin = io.StringIO(input_text)
            try:
                with redirect_stdout(out_buf):
                    if io_mode is IoMode.STDIN_STDOUT:
                        exec(compile(source, "<candidate>", "exec"), {"__name__": "__main__"})
                    else:
                        args = json.loads(input_text)
                        if not isinstance(args, list):
                            raise ValueError("function_call input must be a JSON array")
                        namespace: dict = {}
                        exec(compile(source, "<candidate>", "exec"), namespace)
                        result = namespace[entry_point](*args)
                        print(json.dumps(result, separators=(",", ":"), ensure_ascii=False))
            except SystemExit as e:
                if e.code not in (None, 0):
                    exit_code, trailer = 1, "exc"
                    err_lines.append(f"SystemExit: {e.code}")
            except BaseException:
                exit_code, trailer = 1, "exc"
                err_lines.append(traceback.format_exc())
            finally:
                sys.stdin = old_stdin
        stdout = out_buf.getvalue()
        truncated = len(stdout.encode("utf-8")) > limits.max_output_bytes
        if truncated:
            stdout = stdout.encode("utf-8")[: limits.max_output_bytes].decode("utf-8", errors="replace")
        return RawOutcome(
            exit_code=exit_code,
            stdout=stdout,
            stderr="\n".join(err_lines),
            duration=time.perf_counter() - start,
            truncated=truncated,
            timed_out=False,
            trailer=trailer,
        )


def run_candidate(source: str, io_mode: IoMode, entry_point: str | None,
                  input_text: str, limits: ExecLimits, runner: Runner) -> RawOutcome:
    """Run one candidate on one input; raises HarnessError on runner failure.

    Candidate failures (exceptions, timeouts) come back as data in the
    RawOutcome; only breakdowns of the runner itself raise.
    """
    raw = runner.run(source, io_mode, entry_point, input_text, limits)
    if raw.timed_out:
        return raw
    if raw.exit_code == 2 or raw.trailer == "harness":
        raise HarnessError(f"runner {runner.identity!r} reported internal failure: {raw.stderr.strip()[:500]}")
    if raw.trailer not in ("ok", "exc"):
        raise HarnessError(
            f"runner {runner.identity!r} violated the status-trailer contract (exit={raw.exit_code})"
        )
    return raw


def _signature_class(raw: RawOutcome) -> str:
    if raw.timed_out:
        return SIG_TIMEOUT
    if raw.trailer == "exc" or raw.exit_code != 0:
        return SIG_ERR
    return SIG_OK


def _result_for(raw: RawOutcome, expected: str, numeric_tol: float | None) -> ExecutionResult:
    if raw.timed_out:
        status = ExecStatus.TIMEOUT
    elif raw.trailer == "exc" or raw.exit_code != 0:
        status = ExecStatus.RUNTIME_ERROR
    elif compare_outputs(raw.stdout, expected, numeric_tol):
        status = ExecStatus.PASSED
    elif raw.truncated:
        status = ExecStatus.OUTPUT_TRUNCATED
    else:
        status = ExecStatus.WRONG_ANSWER
    return ExecutionResult(status=status, stdout=raw.stdout, stderr=raw.stderr, duration=raw.duration)


def failure_summary(result: ExecutionResult) -> str:
    """Deterministic one-field description of a failing result for prompts.

    Runtime errors are summarized by the final stderr line (the exception
    message) rather than the full traceback: tracebacks embed temp paths
    and interpreter frames that vary across conforming runners, and
    prompt bytes must not.
    """
    if result.status is ExecStatus.TIMEOUT:
        return "execution timed out"
    if result.status is ExecStatus.RUNTIME_ERROR:
        for line in reversed(result.stderr.splitlines()):
            if line.strip():
                return line.strip()[:4096]
        return "runtime error (no diagnostic output)"
    return normalize_output(result.stdout)[:4096]


@dataclass(frozen=True)
class SuiteReport:
    results: tuple[ExecutionResult, ...]
    pass_fraction: float

    @property
    def first_failure(self) -> int | None:
        for i, r in enumerate(self.results):
            if r.status is not ExecStatus.PASSED:
                return i
        return None

    @property
    def all_passed(self) -> bool:
        return self.pass_fraction == 1.0


def execute_on_suite(source: str, problem: Problem, suite: TestSuite, limits: ExecLimits,
                     runner: Runner, numeric_tol: float | None = None,
                     short_circuit: bool = False) -> SuiteReport:
    """Run a suite in order; empty suite counts as a vacuous full pass.

    Short-circuiting is off by default so the first failing case cited in
    debugging prompts is deterministic (first in suite order).
    """
    if len(suite) == 0:
        return SuiteReport(results=(), pass_fraction=1.0)
    results: list[ExecutionResult] = []
    passed = 0
    for case in suite.cases:
        raw = run_candidate(source, problem.io_mode, problem.entry_point, case.input, limits, runner)
        result = _result_for(raw, case.expected_output, numeric_tol)
        results.append(result)
        if result.status is ExecStatus.PASSED:
            passed += 1
        elif short_circuit:
            break
    return SuiteReport(results=tuple(results), pass_fraction=passed / len(suite))


def outcome_signature(source: str, problem: Problem, probe_inputs: Sequence[str],
                      limits: ExecLimits, runner: Runner) -> OutcomeSignature:
    """Behavior fingerprint over probe inputs, the clustering key.

    Behaviorally identical programs yield equal signatures on the same
    probes; expected outputs play no part.
    """
    if not probe_inputs:
        raise ValueError("probe_inputs must be non-empty")
    entries = []
    for probe in probe_inputs:
        raw = run_candidate(source, problem.io_mode, problem.entry_point, probe, limits, runner)
        cls = _signature_class(raw)
        entries.append((cls, normalize_output(raw.stdout) if cls == SIG_OK else ""))
    return tuple(entries)


class Sandbox:
    """Execution service: a Runner plus limits, memoization, and workers.

    Memoization is keyed on (source, io_mode, entry_point, input) and is
    sound because the Runner contract requires determinism for
    deterministic programs; it collapses the heavy duplication a
    16-sample pipeline produces. Suites run their cases concurrently up
    to the worker cap; results keep suite order.
    """

    def __init__(self, runner: Runner, limits: ExecLimits = ExecLimits(),
                 numeric_tol: float | None = None, workers: int | None = None,
                 memoize: bool = True):
        self.runner = runner
        self.limits = limits
        self.numeric_tol = numeric_tol
        self.workers = workers or os.cpu_count() or 2
        self.memoize = memoize
        self._memo: dict[tuple, Future] = {}
        self._memo_lock = threading.Lock()
        self._pool: ThreadPoolExecutor | None = None
        self._pool_lock = threading.Lock()
        self.executions = 0

    def _executor(self) -> ThreadPoolExecutor:
        with self._pool_lock:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="sstar-exec")
            return self._pool

    def close(self) -> None:
        with self._pool_lock:
            if self._pool is not None:
                self._pool.shutdown(wait=True)
                self._pool = None

    def run_raw(self, source: str, io_mode: IoMode, entry_point: str | None, input_text: str) -> RawOutcome:
        if not self.memoize:
            self.executions += 1
            return run_candidate(source, io_mode, entry_point, input_text, self.limits, self.runner)
        key = (source, io_mode, entry_point, input_text)
        with self._memo_lock:
            fut = self._memo.get(key)
            owner = fut is None
            if owner:
                fut = Future()
                self._memo[key] = fut
        if owner:
            try:
                self.executions += 1
                fut.set_result(run_candidate(source, io_mode, entry_point, input_text, self.limits, self.runner))
            except BaseException as e:
                fut.set_exception(e)
        return fut.result()

    def execute_on_suite(self, source: str, problem: Problem, suite: TestSuite,
                         short_circuit: bool = False) -> SuiteReport:
        if len(suite) == 0:
            return SuiteReport(results=(), pass_fraction=1.0)
        if short_circuit:
            results = []
            passed = 0
            for case in suite.cases:
                raw = self.run_raw(source, problem.io_mode, problem.entry_point, case.input)
                result = _result_for(raw, case.expected_output, self.numeric_tol)
                results.append(result)
                if result.status is not ExecStatus.PASSED:
                    break
                passed += 1
            return SuiteReport(results=tuple(results), pass_fraction=passed / len(suite))
        raws = self._map_inputs(source, problem, [c.input for c in suite.cases])
        results = tuple(
            _result_for(raw, case.expected_output, self.numeric_tol)
            for raw, case in zip(raws, suite.cases)
        )
        passed = sum(1 for r in results if r.status is ExecStatus.PASSED)
        return SuiteReport(results=results, pass_fraction=passed / len(suite))

    def outcome_signature(self, source: str, problem: Problem, probe_inputs: Sequence[str]) -> OutcomeSignature:
        if not probe_inputs:
            raise ValueError("probe_inputs must be non-empty")
        raws = self._map_inputs(source, problem, list(probe_inputs))
        entries = []
        for raw in raws:
            cls = _signature_class(raw)
            entries.append((cls, normalize_output(raw.stdout) if cls == SIG_OK else ""))
        return tuple(entries)

    def transcript(self, source: str, problem: Problem, inputs: Sequence[str]) -> list[dict]:
        """Per-input behavior records fed to judge prompts (JSON-friendly)."""
        records = []
        for raw in self._map_inputs(source, problem, list(inputs)):
            cls = _signature_class(raw)
            record = {"input": "", "status": cls, "output": ""}
            if cls == SIG_OK:
                record["output"] = normalize_output(raw.stdout)
            elif cls == SIG_ERR:
                record["error"] = failure_summary(
                    ExecutionResult(ExecStatus.RUNTIME_ERROR, raw.stdout, raw.stderr, raw.duration)
                )
            records.append(record)
        for record, inp in zip(records, inputs):
            record["input"] = inp
        return records

    def _map_inputs(self, source: str, problem: Problem, inputs: list[str]) -> list[RawOutcome]:
        if len(inputs) <= 1 or self.workers <= 1:
            return [self.run_raw(source, problem.io_mode, problem.entry_point, i) for i in inputs]
        pool = self._executor()
        futures = [
            pool.submit(self.run_raw, source, problem.io_mode, problem.entry_point, i)
            for i in inputs
        ]
        return [f.result() for f in futures]
