/** Runner-contract conformance suite, driving the built shim as a process. */

import { execFileSync, spawnSync } from "node:child_process";
import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const SHIM = path.join(HERE, "..", "dist", "main.js");

interface ShimResult {
  code: number;
  stdout: string;
  stderr: string;
  trailer: string | null;
  diagnostics: string;
}

function runShim(
  source: string,
  input: string,
  ioMode: string,
  entryPoint?: string,
  env?: Record<string, string>,
): ShimResult {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "shim-test-"));
  const sourcePath = path.join(dir, "solution.py");
  const inputPath = path.join(dir, "input.txt");
  fs.writeFileSync(sourcePath, source);
  fs.writeFileSync(inputPath, input);
  const argv = [SHIM, sourcePath, inputPath, ioMode];
  if (entryPoint) argv.push(entryPoint);
  const proc = spawnSync("node", argv, {
    encoding: "utf-8",
    env: { ...process.env, ...env },
    timeout: 30_000,
  });
  fs.rmSync(dir, { recursive: true, force: true });
  const errLines = proc.stderr.split("\n").filter((l) => l.trim() !== "");
  const last = errLines.at(-1) ?? "";
  const trailer = last.startsWith("SSTAR_STATUS:") ? last.slice("SSTAR_STATUS:".length) : null;
  return {
    code: proc.status ?? -1,
    stdout: proc.stdout,
    stderr: proc.stderr,
    trailer,
    diagnostics: errLines.slice(0, -1).join("\n"),
  };
}

describe("stdin/stdout mode", () => {
  it("relays candidate stdout byte-exactly and exits 0 with trailer ok", () => {
    const res = runShim("print(input())", "x\n", "stdin_stdout");
    expect(res.stdout).toBe("x\n");
    expect(res.code).toBe(0);
    expect(res.trailer).toBe("ok");
  });

  it("never contaminates candidate stdout (sentinel purity)", () => {
    const res = runShim("print('SENTINEL-0042')", "", "stdin_stdout");
    expect(res.stdout).toBe("SENTINEL-0042\n");
  });

  it("maps a candidate exception to exit 1 and trailer exc", () => {
    const res = runShim("raise ValueError('pop goes the shim')", "", "stdin_stdout");
    expect(res.code).toBe(1);
    expect(res.trailer).toBe("exc");
    expect(res.stderr).toContain("ValueError: pop goes the shim");
  });

  it("maps a syntax error to exit 1 and trailer exc", () => {
    const res = runShim("this is : not python", "", "stdin_stdout");
    expect(res.code).toBe(1);
    expect(res.trailer).toBe("exc");
  });

  it("keeps candidate stderr ahead of the trailer", () => {
    const res = runShim("import sys\nsys.stderr.write('warn line\\n')\nprint(1)", "", "stdin_stdout");
    expect(res.diagnostics).toContain("warn line");
    expect(res.trailer).toBe("ok");
  });

  it("treats nonzero sys.exit as a candidate failure", () => {
    const res = runShim("import sys\nsys.exit(3)", "", "stdin_stdout");
    expect(res.code).toBe(1);
    expect(res.trailer).toBe("exc");
  });

  it("feeds the input file to candidate stdin in full", () => {
    const res = runShim(
      "import sys\nprint(sum(int(x) for x in sys.stdin.read().split()))",
      "1 2 3 4\n",
      "stdin_stdout",
    );
    expect(res.stdout).toBe("10\n");
  });
});

describe("function-call mode", () => {
  it("calls the entry point with JSON array arguments and prints canonical JSON", () => {
    const res = runShim("def add(a, b):\n    return a + b", "[2,3]", "function_call", "add");
    expect(res.stdout).toBe("5\n");
    expect(res.code).toBe(0);
    expect(res.trailer).toBe("ok");
  });

  it("canonicalizes booleans and preserves object key order", () => {
    const res = runShim(
      "def f():\n    return {'b': True, 'a': [1, None]}",
      "[]",
      "function_call",
      "f",
    );
    expect(res.stdout).toBe('{"b":true,"a":[1,null]}\n');
  });

  it("treats a missing entry point as a candidate failure", () => {
    const res = runShim("def other():\n    return 1", "[]", "function_call", "add");
    expect(res.code).toBe(1);
    expect(res.trailer).toBe("exc");
  });
});

describe("harness failures", () => {
  it("exits 2 with trailer harness on bad argument count", () => {
    const proc = spawnSync("node", [SHIM, "onlyone"], { encoding: "utf-8" });
    expect(proc.status).toBe(2);
    const lines = proc.stderr.split("\n").filter((l) => l.trim() !== "");
    expect(lines.at(-1)).toBe("SSTAR_STATUS:harness");
    expect(proc.stdout).toBe("");
  });

  it("exits 2 with trailer harness on unreadable source", () => {
    const proc = spawnSync("node", [SHIM, "/no/such/file.py", "/no/such/input", "stdin_stdout"], {
      encoding: "utf-8",
    });
    expect(proc.status).toBe(2);
    const lines = proc.stderr.split("\n").filter((l) => l.trim() !== "");
    expect(lines.at(-1)).toBe("SSTAR_STATUS:harness");
  });

  it("exits 2 on unknown io_mode", () => {
    const res = runShim("print(1)", "", "teleport");
    expect(res.code).toBe(2);
    expect(res.trailer).toBe("harness");
  });

  it("requires an entry point in function_call mode", () => {
    const res = runShim("def f():\n    return 1", "[]", "function_call");
    expect(res.code).toBe(2);
    expect(res.trailer).toBe("harness");
  });
});

describe("resource caps", () => {
  it("applies SSTAR_MEMORY_MB so a memory hog fails as a candidate error", () => {
    const res = runShim(
      "x = bytearray(512 * 1024 * 1024)\nprint(len(x))",
      "",
      "stdin_stdout",
      undefined,
      { SSTAR_MEMORY_MB: "128" },
    );
    expect(res.code).toBe(1);
    expect(res.trailer).toBe("exc");
  });
});

describe("trailer discipline", () => {
  it("emits the trailer as the final stderr line on every exit path", () => {
    const cases: Array<[string, string, string, string | undefined]> = [
      ["print(1)", "", "stdin_stdout", undefined],
      ["raise RuntimeError('x')", "", "stdin_stdout", undefined],
      ["def f():\n    return 0", "[]", "function_call", "f"],
    ];
    for (const [source, input, mode, entry] of cases) {
      const res = runShim(source, input, mode, entry);
      expect(res.trailer, `${mode} source=${source}`).not.toBeNull();
    }
  });
});
