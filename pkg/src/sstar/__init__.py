"""Test-time scaling engine for code generation.

Two-stage pipeline (parallel sampling + iterative debugging, then
execution-grounded selection), baselines, pass@k metrics, and a
deterministic mock model provider for offline runs.

Kept import-light on purpose: the execution stub shim is spawned as a
fresh interpreter per test case, so pulling heavy submodules in here
would tax every candidate run. Import the submodules you need
(``sstar.problems``, ``sstar.harness``, ...) directly.
"""

__version__ = "0.1.0"
