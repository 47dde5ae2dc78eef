"""Built-in Runner-contract shim: runs one Python candidate on one input.

Invoked as a fresh interpreter per test case:

    python stub_shim.py SOURCE_PATH INPUT_PATH IO_MODE [ENTRY_POINT]

Stdout carries candidate output only; every diagnostic goes to stderr,
ending with a final ``SSTAR_STATUS:<ok|exc|harness>`` line. Exit codes:
0 clean, 1 candidate exception, 2 shim-internal failure. Honors an
SSTAR_MEMORY_MB address-space cap when set.

Deliberately free of package imports: spawn latency multiplies across
every candidate execution of a benchmark run.
"""

import io
import json
import os
import sys
import traceback

OK, EXC, HARNESS = "ok", "exc", "harness"


def _apply_memory_cap() -> None:
    cap = os.environ.get("SSTAR_MEMORY_MB")
    if not cap:
        return
    try:
        import resource

        limit = int(cap) << 20
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    except (ImportError, ValueError, OSError):
        pass  # cap unavailable on this platform; wall timeout still applies


def _finish(status: str, code: int) -> int:
    sys.stdout.flush()
    sys.stderr.flush()
    print(f"SSTAR_STATUS:{status}", file=sys.stderr)
    sys.stderr.flush()
    return code


def _run(source: str, input_text: str, io_mode: str, entry_point) -> int:
    try:
        if io_mode == "stdin_stdout":
            sys.stdin = io.StringIO(input_text)
            exec(compile(source, "solution.py", "exec"), {"__name__": "__main__"})
        elif io_mode == "function_call":
            args = json.loads(input_text)
            if not isinstance(args, list):
                raise ValueError("function_call input must be a JSON array of arguments")
            namespace = {"__name__": "__sstar_candidate__"}
            exec(compile(source, "solution.py", "exec"), namespace)
            result = namespace[entry_point](*args)
            # Canonical return-value text: true/false booleans, no
            # insignificant whitespace, object keys in insertion order.
            print(json.dumps(result, separators=(",", ":"), ensure_ascii=False))
        else:
            print(f"unknown io_mode {io_mode!r}", file=sys.stderr)
            return _finish(HARNESS, 2)
    except SystemExit as e:
        if e.code in (None, 0):
            return _finish(OK, 0)
        print(f"SystemExit: {e.code}", file=sys.stderr)
        return _finish(EXC, 1)
    except BaseException:
        traceback.print_exc()
        return _finish(EXC, 1)
    return _finish(OK, 0)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if len(argv) not in (3, 4):
        print("usage: stub_shim SOURCE_PATH INPUT_PATH IO_MODE [ENTRY_POINT]", file=sys.stderr)
        return _finish(HARNESS, 2)
    source_path, input_path, io_mode = argv[0], argv[1], argv[2]
    entry_point = argv[3] if len(argv) == 4 else None
    if io_mode == "function_call" and not entry_point:
        print("function_call mode requires ENTRY_POINT", file=sys.stderr)
        return _finish(HARNESS, 2)
    try:
        with open(source_path, encoding="utf-8") as fh:
            source = fh.read()
        with open(input_path, encoding="utf-8") as fh:
            input_text = fh.read()
    except OSError as e:
        print(f"cannot read candidate files: {e}", file=sys.stderr)
        return _finish(HARNESS, 2)
    _apply_memory_cap()
    return _run(source, input_text, io_mode, entry_point)


if __name__ == "__main__":
    sys.exit(main())
