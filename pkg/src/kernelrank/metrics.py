"""Ranking metrics and significance: NDCG@k, MRR, permutation test, W/T/L.

NDCG follows the TREC convention: gain 2^grade - 1, discount log2(rank+1),
normalized by the ideal ordering over all labeled documents. Queries whose
ideal DCG is zero score 0 (see ndcg_at_k for the skip alternative). The
significance test is a paired sign-flip permutation test on per-query
differences, two-sided; with few queries the sign patterns are enumerated
exhaustively, otherwise sampled.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log2
from typing import Iterable, Mapping, Sequence

import numpy as np


class AlignmentError(ValueError):
    """Two per-query value sets do not cover the same queries."""


class MissingClickError(ValueError):
    """A clicked document does not appear in its ranking."""


@dataclass(frozen=True)
class SignificanceReport:
    mean_a: float
    mean_b: float
    p_value: float
    iterations: int
    seed: int


def dcg_at_k(ranked_ids: Sequence[str], grades: Mapping[str, int], k: int) -> float:
    total = 0.0
    for r, doc_id in enumerate(ranked_ids[:k], start=1):
        gain = (1 << grades.get(doc_id, 0)) - 1
        total += gain / log2(r + 1)
    return total


def ndcg_at_k(
    ranked_ids: Sequence[str],
    grades: Mapping[str, int],
    k: int,
    skip_zero_ideal: bool = False,
) -> float:
    """NDCG at depth k; 0.0 when no labeled document has positive grade.

    With skip_zero_ideal the zero-ideal case returns NaN so callers can
    drop the query from averages instead.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ideal_order = sorted(grades.values(), reverse=True)
    ideal = 0.0
    for r, grade in enumerate(ideal_order[:k], start=1):
        ideal += ((1 << grade) - 1) / log2(r + 1)
    if ideal == 0.0:
        return float("nan") if skip_zero_ideal else 0.0
    return dcg_at_k(ranked_ids, grades, k) / ideal


def reciprocal_rank(ranked_ids: Sequence[str], clicked_id: str, query_key: str = "?") -> float:
    for r, doc_id in enumerate(ranked_ids, start=1):
        if doc_id == clicked_id:
            return 1.0 / r
    raise MissingClickError(f"clicked doc {clicked_id!r} missing from ranking of query {query_key!r}")


def mrr(cases: Iterable[tuple]) -> float:
    """Mean reciprocal rank of (ranked_ids, clicked_id[, query_key]) cases."""
    total = 0.0
    count = 0
    for case in cases:
        ranked_ids, clicked_id = case[0], case[1]
        query_key = case[2] if len(case) > 2 else "?"
        total += reciprocal_rank(ranked_ids, clicked_id, query_key)
        count += 1
    if count == 0:
        raise ValueError("no cases to average")
    return total / count


def _aligned_diffs(a: Mapping[str, float], b: Mapping[str, float]) -> np.ndarray:
    if a.keys() != b.keys():
        extra = sorted(set(a) ^ set(b))
        raise AlignmentError(f"query sets differ, e.g. {extra[:3]}")
    keys = sorted(a)
    return np.array([a[k] - b[k] for k in keys])


def permutation_test(
    a: Mapping[str, float],
    b: Mapping[str, float],
    iterations: int = 100_000,
    seed: int = 0,
) -> SignificanceReport:
    """Paired two-sided sign-flip permutation test on per-query values."""
    diffs = _aligned_diffs(a, b)
    n = diffs.size
    if n < 2:
        raise ValueError("need at least 2 aligned queries")
    observed = abs(float(diffs.mean()))

    if n <= 20 and (1 << n) <= iterations:
        # exhaustive: all 2^n sign assignments
        total = 1 << n
        count = 0
        for bits in range(total):
            signs = np.array([1.0 if (bits >> i) & 1 else -1.0 for i in range(n)])
            if abs(float((signs * diffs).mean())) >= observed - 1e-15:
                count += 1
        p = count / total
        used = total
    else:
        rng = np.random.default_rng(seed)
        count = 0
        remaining = iterations
        while remaining > 0:
            block = min(remaining, 20_000)
            signs = rng.integers(0, 2, size=(block, n)).astype(np.float64) * 2.0 - 1.0
            permuted = np.abs(signs @ diffs) / n
            count += int((permuted >= observed - 1e-15).sum())
            remaining -= block
        p = (count + 1) / (iterations + 1)
        used = iterations
    means = (float(np.mean(list(a.values()))), float(np.mean(list(b.values()))))
    return SignificanceReport(means[0], means[1], p, used, seed)


def win_tie_loss(
    a: Mapping[str, float],
    b: Mapping[str, float],
    tolerance: float = 1e-9,
) -> tuple[int, int, int]:
    """Counts of queries where a beats, ties, or trails b."""
    diffs = _aligned_diffs(a, b)
    wins = int((diffs > tolerance).sum())
    losses = int((diffs < -tolerance).sum())
    ties = diffs.size - wins - losses
    return wins, ties, losses
