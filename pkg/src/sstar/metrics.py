"""Pass@k estimation and aggregate metric helpers.

Two distinct notions are exposed and must not be conflated:

* ``pass_at_k(n, c, k)``: the unbiased estimator
  ``1 - C(n-c, k) / C(n, k)``, the probability that at least one of k
  samples drawn without replacement from n (of which c are correct)
  is correct. Used for zero-shot-style estimation.
* Pass@1 of a selection policy: the verdict of the single sample the
  policy chose. Pass@N: whether any of the N candidates was correct
  (the oracle upper bound). Those live in the harness aggregates.
"""

from __future__ import annotations

__all__ = ["DomainError", "pass_at_k", "mean_or_none"]


class DomainError(ValueError):
    """Raised when (n, c, k) violate 0 <= c <= n and 1 <= k <= n."""


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k for one problem, in numerically stable product form.

    Equals ``1 - prod_{i=n-c+1}^{n} (1 - k/i)``; returns exactly 1.0 when
    fewer than k incorrect samples exist (c > n - k).
    """
    if not (isinstance(n, int) and isinstance(c, int) and isinstance(k, int)):
        raise DomainError("n, c, k must be integers")
    if not (0 <= c <= n):
        raise DomainError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not (1 <= k <= n):
        raise DomainError(f"need 1 <= k <= n, got k={k}, n={n}")
    if c == 0:
        return 0.0
    if c > n - k:
        return 1.0
    miss = 1.0
    for i in range(n - c + 1, n + 1):
        miss *= 1.0 - k / i
    return 1.0 - miss


def mean_or_none(values: list[float] | list[bool]) -> float | None:
    """Mean of a possibly-empty list; None keeps empty aggregates honest."""
    if not values:
        return None
    return sum(1.0 * v for v in values) / len(values)
