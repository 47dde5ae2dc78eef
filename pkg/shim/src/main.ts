/**
 * Runner-contract shim: run one Python candidate on one input.
 *
 *   node main.js SOURCE_PATH INPUT_PATH IO_MODE [ENTRY_POINT]
 *
 * Contract: candidate stdout goes to our stdout verbatim, everything else
 * to stderr, and the final stderr line is always `SSTAR_STATUS:<status>`:
 *   ok       clean completion            -> exit 0
 *   exc      candidate raised / nonzero  -> exit 1
 *   harness  shim-internal failure       -> exit 2
 *
 * An SSTAR_MEMORY_MB environment variable, when present, is applied to the
 * candidate interpreter as an address-space ulimit. Wall-timeout
 * enforcement belongs to the caller, which owns the process group.
 */

import { spawn } from "node:child_process";
import fs from "node:fs";

const PYTHON = process.env.SSTAR_PYTHON ?? "python3";

type Status = "ok" | "exc" | "harness";

function finish(status: Status, code: number): void {
  process.stderr.write(`SSTAR_STATUS:${status}\n`);
  process.exitCode = code;
}

function harnessFail(message: string): void {
  process.stderr.write(`${message}\n`);
  finish("harness", 2);
}

/**
 * Driver for FunctionCall mode, executed by the candidate interpreter.
 * Mirrors the canonical return-value printing of any conforming runner:
 * json with compact separators, true/false booleans, insertion-order keys.
 */
const FUNCTION_CALL_DRIVER = `
import json, sys
source_path, input_path, entry = sys.argv[1:4]
with open(source_path, encoding="utf-8") as fh:
    source = fh.read()
with open(input_path, encoding="utf-8") as fh:
    args = json.loads(fh.read())
if not isinstance(args, list):
    raise ValueError("function_call input must be a JSON array of arguments")
namespace = {"__name__": "__sstar_candidate__"}
exec(compile(source, "solution.py", "exec"), namespace)
result = namespace[entry](*args)
print(json.dumps(result, separators=(",", ":"), ensure_ascii=False))
`.trim();

/** Wrap the interpreter argv in a shell ulimit when a memory cap is set. */
function withMemoryCap(argv: string[]): { cmd: string; args: string[] } {
  const capMb = Number(process.env.SSTAR_MEMORY_MB ?? "");
  if (!Number.isFinite(capMb) || capMb <= 0) {
    return { cmd: argv[0], args: argv.slice(1) };
  }
  const kib = Math.floor(capMb * 1024);
  return {
    cmd: "/bin/sh",
    args: ["-c", `ulimit -v ${kib} 2>/dev/null; exec "$@"`, "sh", ...argv],
  };
}

function runCandidate(argv: string[], stdinData: Buffer | null): void {
  const { cmd, args } = withMemoryCap(argv);
  const child = spawn(cmd, args, { stdio: ["pipe", "pipe", "pipe"] });

  child.on("error", (err) => {
    harnessFail(`failed to spawn candidate interpreter: ${err.message}`);
  });

  // Relay streams verbatim; both are FIFO writables, so the trailer we
  // write on close lands after every already-queued stderr chunk.
  child.stdout.pipe(process.stdout, { end: false });
  child.stderr.pipe(process.stderr, { end: false });

  if (stdinData !== null) {
    child.stdin.write(stdinData);
  }
  child.stdin.end();

  child.on("close", (code, signal) => {
    if (signal !== null) {
      process.stderr.write(`candidate killed by signal ${signal}\n`);
      finish("exc", 1);
    } else if (code === 0) {
      finish("ok", 0);
    } else {
      finish("exc", 1);
    }
  });
}

function main(argv: string[]): void {
  if (argv.length !== 3 && argv.length !== 4) {
    harnessFail("usage: main.js SOURCE_PATH INPUT_PATH IO_MODE [ENTRY_POINT]");
    return;
  }
  const [sourcePath, inputPath, ioMode, entryPoint] = argv;

  if (ioMode !== "stdin_stdout" && ioMode !== "function_call") {
    harnessFail(`unknown io_mode ${JSON.stringify(ioMode)}`);
    return;
  }
  if (ioMode === "function_call" && !entryPoint) {
    harnessFail("function_call mode requires ENTRY_POINT");
    return;
  }

  let inputData: Buffer;
  try {
    fs.accessSync(sourcePath, fs.constants.R_OK);
    inputData = fs.readFileSync(inputPath);
  } catch (err) {
    harnessFail(`cannot read candidate files: ${(err as Error).message}`);
    return;
  }

  if (ioMode === "stdin_stdout") {
    runCandidate([PYTHON, sourcePath], inputData);
  } else {
    runCandidate([PYTHON, "-c", FUNCTION_CALL_DRIVER, sourcePath, inputPath, entryPoint as string], null);
  }
}

main(process.argv.slice(2));
