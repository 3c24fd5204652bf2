"""Model diagnostics: per-kernel ablation, occupancy, embedding movement.

The ablation re-scores the log's single-click sessions with one kernel at
a time, showing which similarity levels carry ranking signal. Occupancy
histograms count sampled query-title word pairs by the kernel mean nearest
their cosine; the movement matrix compares those assignments between a
reference embedding file and the trained embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clicks import extract_raw_click_cases
from .corpus import (
    DEFAULT_QUERY_CAP,
    DEFAULT_TITLE_CAP,
    QueryLog,
    Vocabulary,
    doc_titles_by_query,
    encode_text,
    query_tokens_by_key,
)
from .embeddings import ZERO_NORM_EPS, EmbeddingMatrix
from .metrics import mrr, reciprocal_rank
from .model import KernelBank, RankingModel, RankingParams, forward
from .ranking import rank_log


@dataclass
class KernelAblationRow:
    mu: float
    sigma: float
    weight: float
    mrr: float


def single_kernel_ablation(
    model: RankingModel,
    vocab: Vocabulary,
    log: QueryLog,
    query_cap: int = DEFAULT_QUERY_CAP,
    title_cap: int = DEFAULT_TITLE_CAP,
) -> list[KernelAblationRow]:
    """MRR over the log's single-click sessions using one kernel at a time."""
    if model.pooling_mode != "kernel":
        raise ValueError("kernel ablation needs a kernel-pooling model")
    cases = extract_raw_click_cases(log)
    if not cases:
        raise ValueError("log has no single-click sessions")
    rows = []
    for k, (mu, sigma) in enumerate(model.kernel_bank.kernels):
        single = RankingModel(
            embeddings=model.embeddings,
            kernel_bank=KernelBank(np.array([mu]), np.array([sigma])),
            ranking=RankingParams(np.array([model.ranking.w[k]]), model.ranking.b),
            pooling_mode="kernel",
            embeddings_frozen=True,
            clamp_floor=model.clamp_floor,
        )
        scores = rank_log(single, vocab, log, query_cap, title_cap)
        values = []
        for case in cases:
            ranked = sorted(
                case.doc_ids, key=lambda d: (-scores[case.query_key][d], d)
            )
            values.append(reciprocal_rank(ranked, case.clicked_id, case.query_key))
        rows.append(KernelAblationRow(mu, sigma, float(model.ranking.w[k]), float(np.mean(values))))
    return rows


def sample_word_pairs(
    log: QueryLog,
    vocab: Vocabulary,
    max_pairs: int = 200_000,
    seed: int = 0,
) -> np.ndarray:
    """Distinct (query term id, title term id) pairs observed in the log."""
    pairs: set[tuple[int, int]] = set()
    titles = doc_titles_by_query(log)
    for query_key, query_tokens in query_tokens_by_key(log).items():
        q_ids = {vocab.id_for(t) for t in query_tokens}
        d_ids: set[int] = set()
        for title in titles[query_key].values():
            d_ids.update(vocab.id_for(t) for t in title)
        pairs.update((qi, di) for qi in q_ids for di in d_ids)
    ordered = np.array(sorted(pairs), dtype=np.intp)
    if len(ordered) > max_pairs:
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(ordered), size=max_pairs, replace=False)
        ordered = ordered[np.sort(keep)]
    return ordered


def _pair_cosines(emb: EmbeddingMatrix, pairs: np.ndarray) -> np.ndarray:
    a = emb.vectors[pairs[:, 0]]
    b = emb.vectors[pairs[:, 1]]
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    safe = np.maximum(na * nb, ZERO_NORM_EPS)
    cos = (a * b).sum(axis=1) / safe
    cos[(na < ZERO_NORM_EPS) | (nb < ZERO_NORM_EPS)] = 0.0
    return cos


def nearest_kernel(bank: KernelBank, cosines: np.ndarray) -> np.ndarray:
    """Index of the kernel whose mu is closest to each cosine."""
    return np.abs(cosines[:, None] - bank.mus[None, :]).argmin(axis=1)


def kernel_occupancy(
    emb: EmbeddingMatrix, bank: KernelBank, pairs: np.ndarray
) -> np.ndarray:
    """Word-pair counts per kernel; sums to the number of sampled pairs."""
    counts = np.zeros(bank.count, dtype=np.int64)
    if len(pairs) == 0:
        return counts
    assignment = nearest_kernel(bank, _pair_cosines(emb, pairs))
    for k in range(bank.count):
        counts[k] = int((assignment == k).sum())
    return counts


def movement_matrix(
    reference: EmbeddingMatrix,
    trained: EmbeddingMatrix,
    bank: KernelBank,
    pairs: np.ndarray,
) -> np.ndarray:
    """Fraction of each reference kernel's pairs landing in each kernel after training."""
    k = bank.count
    counts = np.zeros((k, k), dtype=np.float64)
    if len(pairs) == 0:
        return counts
    before = nearest_kernel(bank, _pair_cosines(reference, pairs))
    after = nearest_kernel(bank, _pair_cosines(trained, pairs))
    for row, col in zip(before, after):
        counts[row, col] += 1.0
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
