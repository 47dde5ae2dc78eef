"""Problems, test suites, and dataset loading.

A benchmark problem carries a natural-language description plus two
input/output test suites: a small public one (visible to the model,
used for debugging feedback and filtering) and a private one (used only
for final verdicts). Datasets ship as JSONL, one problem per line
(the ``JsonlV1`` schema below).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

__all__ = [
    "IoMode",
    "Difficulty",
    "Visibility",
    "DatasetFormat",
    "TestCase",
    "TestSuite",
    "Problem",
    "Dataset",
    "DatasetError",
    "DatasetIoError",
    "MalformedRecord",
    "DuplicateProblemId",
    "load_dataset",
    "save_dataset",
    "validate_problem",
]


class IoMode(str, Enum):
    STDIN_STDOUT = "stdin_stdout"
    FUNCTION_CALL = "function_call"


class Difficulty(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    UNKNOWN = "unknown"


class Visibility(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"


class DatasetFormat(str, Enum):
    JSONL_V1 = "jsonl_v1"


@dataclass(frozen=True)
class TestCase:
    """One input/output pair. ``input`` is the exact text fed to the program.

    For FunctionCall problems the input is, by convention, one JSON array
    of positional arguments; the expected output is the canonical JSON of
    the return value.
    """

    input: str
    expected_output: str


@dataclass(frozen=True)
class TestSuite:
    cases: tuple[TestCase, ...]
    visibility: Visibility

    def __len__(self) -> int:
        return len(self.cases)


@dataclass(frozen=True)
class Problem:
    id: str
    description: str
    io_mode: IoMode
    public_tests: TestSuite
    private_tests: TestSuite
    entry_point: str | None = None
    starter_code: str | None = None
    difficulty: Difficulty = Difficulty.UNKNOWN


@dataclass(frozen=True)
class Dataset:
    name: str
    problems: tuple[Problem, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.problems)


class DatasetError(Exception):
    """Base class for dataset loading failures."""


class DatasetIoError(DatasetError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class MalformedRecord(DatasetError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateProblemId(DatasetError):
    def __init__(self, problem_id: str):
        super().__init__(f"duplicate problem id {problem_id!r}")
        self.problem_id = problem_id


def _parse_cases(raw: object, line: int, key: str) -> tuple[TestCase, ...]:
    if not isinstance(raw, list):
        raise MalformedRecord(line, f"{key} must be a list")
    cases = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise MalformedRecord(line, f"{key}[{i}] must be an object")
        inp = item.get("input")
        out = item.get("output")
        if not isinstance(inp, str) or not isinstance(out, str):
            raise MalformedRecord(line, f"{key}[{i}] needs string 'input' and 'output'")
        cases.append(TestCase(input=inp, expected_output=out))
    return tuple(cases)


def _record_to_problem(record: dict, line: int) -> Problem:
    pid = record.get("id")
    if not isinstance(pid, str) or not pid:
        raise MalformedRecord(line, "missing or empty 'id'")
    description = record.get("description")
    if not isinstance(description, str):
        raise MalformedRecord(line, "missing 'description'")

    raw_mode = record.get("io_mode")
    try:
        io_mode = IoMode(raw_mode)
    except ValueError:
        raise MalformedRecord(line, f"unknown io_mode {raw_mode!r}") from None

    entry_point = record.get("entry_point")
    if entry_point is not None and not isinstance(entry_point, str):
        raise MalformedRecord(line, "'entry_point' must be a string when present")
    if io_mode is IoMode.FUNCTION_CALL and not entry_point:
        raise MalformedRecord(line, "function_call problems require 'entry_point'")

    starter_code = record.get("starter_code")
    if starter_code is not None and not isinstance(starter_code, str):
        raise MalformedRecord(line, "'starter_code' must be a string when present")

    raw_difficulty = record.get("difficulty")
    if raw_difficulty is None:
        difficulty = Difficulty.UNKNOWN
    else:
        try:
            difficulty = Difficulty(raw_difficulty)
        except ValueError:
            raise MalformedRecord(line, f"unknown difficulty {raw_difficulty!r}") from None

    return Problem(
        id=pid,
        description=description,
        io_mode=io_mode,
        entry_point=entry_point,
        starter_code=starter_code,
        difficulty=difficulty,
        public_tests=TestSuite(_parse_cases(record.get("public_tests", []), line, "public_tests"), Visibility.PUBLIC),
        private_tests=TestSuite(_parse_cases(record.get("private_tests", []), line, "private_tests"), Visibility.PRIVATE),
    )


def _problem_to_record(p: Problem) -> dict:
    record: dict = {
        "id": p.id,
        "description": p.description,
        "io_mode": p.io_mode.value,
    }
    if p.entry_point is not None:
        record["entry_point"] = p.entry_point
    if p.starter_code is not None:
        record["starter_code"] = p.starter_code
    if p.difficulty is not Difficulty.UNKNOWN:
        record["difficulty"] = p.difficulty.value
    record["public_tests"] = [{"input": c.input, "output": c.expected_output} for c in p.public_tests.cases]
    record["private_tests"] = [{"input": c.input, "output": c.expected_output} for c in p.private_tests.cases]
    return record


def load_dataset(path: str | Path, format: DatasetFormat = DatasetFormat.JSONL_V1) -> Dataset:
    """Load and validate a dataset file.

    Every line must parse into a valid problem; nothing is silently
    dropped. Raises MalformedRecord, DuplicateProblemId, or
    DatasetIoError. Blank lines are not records and are rejected.
    """
    if format is not DatasetFormat.JSONL_V1:
        raise DatasetIoError(f"unsupported dataset format {format!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DatasetIoError(f"{path} is not valid UTF-8: {e}") from e
    except OSError as e:
        raise DatasetIoError(f"cannot read {path}: {e}") from e

    problems: list[Problem] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            raise MalformedRecord(line_no, "blank line in dataset")
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(line_no, f"invalid JSON: {e}") from e
        if not isinstance(record, dict):
            raise MalformedRecord(line_no, "record must be a JSON object")
        problem = _record_to_problem(record, line_no)
        if problem.id in seen:
            raise DuplicateProblemId(problem.id)
        seen.add(problem.id)
        problems.append(problem)

    return Dataset(name=path.stem, problems=tuple(problems))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset in JsonlV1; round-trips through load_dataset."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in dataset.problems:
            fh.write(json.dumps(_problem_to_record(p), ensure_ascii=False) + "\n")


def validate_problem(p: Problem) -> list[str]:
    """Return human-readable invariant violations (empty list = valid)."""
    violations: list[str] = []
    if not p.id:
        violations.append("id: must be non-empty")
    if p.public_tests.visibility is not Visibility.PUBLIC:
        violations.append("public_tests: visibility must be public")
    if p.private_tests.visibility is not Visibility.PRIVATE:
        violations.append("private_tests: visibility must be private")
    if p.io_mode is IoMode.FUNCTION_CALL and not p.entry_point:
        violations.append("entry_point: required for function_call problems")
    if p.io_mode is IoMode.STDIN_STDOUT and p.entry_point:
        violations.append("entry_point: only meaningful for function_call problems")
    if len(p.private_tests) == 0:
        violations.append("private_tests: no private tests: Pass@k undefined")
    return violations
