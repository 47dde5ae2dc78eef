"""pass@k against an exhaustive enumeration oracle, plus metric laws."""

from __future__ import annotations

from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sstar.metrics import DomainError, mean_or_none, pass_at_k


def brute_force_pass_at_k(n: int, c: int, k: int) -> float:
    """Enumerate every k-subset of n samples (c correct); count hits."""
    labels = [True] * c + [False] * (n - c)
    subsets = list(combinations(range(n), k))
    hits = sum(1 for subset in subsets if any(labels[i] for i in subset))
    return hits / len(subsets)


def test_trivial_examples():
    assert pass_at_k(5, 0, 3) == 0.0
    assert pass_at_k(5, 5, 1) == 1.0


def test_derived_example_5_2_2():
    # 10 pairs from 5 samples with 2 correct; 7 pairs contain a correct one
    assert brute_force_pass_at_k(5, 2, 2) == pytest.approx(0.7)
    assert pass_at_k(5, 2, 2) == pytest.approx(0.7, abs=1e-12)


def test_matches_oracle_exhaustively_to_n_12():
    for n in range(1, 13):
        for c in range(0, n + 1):
            for k in range(1, n + 1):
                expected = brute_force_pass_at_k(n, c, k)
                assert pass_at_k(n, c, k) == pytest.approx(expected, abs=1e-12), (n, c, k)


def test_returns_one_when_not_enough_incorrect():
    assert pass_at_k(10, 8, 5) == 1.0  # c > n - k


def test_domain_errors():
    with pytest.raises(DomainError):
        pass_at_k(5, 6, 1)
    with pytest.raises(DomainError):
        pass_at_k(5, -1, 1)
    with pytest.raises(DomainError):
        pass_at_k(5, 2, 0)
    with pytest.raises(DomainError):
        pass_at_k(5, 2, 6)


@settings(max_examples=1000)
@given(st.data())
def test_monotone_in_k(data):
    n = data.draw(st.integers(1, 40))
    c = data.draw(st.integers(0, n))
    k = data.draw(st.integers(1, n - 1)) if n > 1 else 1
    if n > 1:
        assert pass_at_k(n, c, k) <= pass_at_k(n, c, k + 1) + 1e-12


@settings(max_examples=1000)
@given(st.data())
def test_monotone_in_c(data):
    n = data.draw(st.integers(1, 40))
    c = data.draw(st.integers(0, n - 1)) if n > 1 else 0
    k = data.draw(st.integers(1, n))
    if n > 1:
        assert pass_at_k(n, c, k) <= pass_at_k(n, c + 1, k) + 1e-12


def test_mean_or_none():
    assert mean_or_none([]) is None
    assert mean_or_none([True, False]) == 0.5
    assert mean_or_none([1.0, 0.0, 1.0]) == pytest.approx(2 / 3)
