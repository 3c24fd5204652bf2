"""Unsupervised word-based rankers: BM25 and Dirichlet-smoothed LM.

Statistics are computed over whatever document text the log supplies
(titles, at desk scale); pass external stats to score against a larger
collection. Defaults are the conventional full-text parameters.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from math import log
from typing import Iterable, Sequence

BM25_K1 = 1.2
BM25_B = 0.75
LM_MU = 2500.0
UNSEEN_CF = 0.5


@dataclass
class CorpusStats:
    doc_count: int
    avg_doc_len: float
    collection_len: int
    doc_freq: dict[str, int] = field(default_factory=dict)
    coll_freq: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.doc_count < 1 or self.avg_doc_len <= 0:
            raise ValueError("corpus stats need at least one non-empty document")


def build_corpus_stats(docs: Iterable[Sequence[str]]) -> CorpusStats:
    doc_freq: Counter[str] = Counter()
    coll_freq: Counter[str] = Counter()
    doc_count = 0
    collection_len = 0
    for tokens in docs:
        doc_count += 1
        collection_len += len(tokens)
        coll_freq.update(tokens)
        doc_freq.update(set(tokens))
    if doc_count == 0 or collection_len == 0:
        raise ValueError("cannot build stats over an empty corpus")
    return CorpusStats(
        doc_count=doc_count,
        avg_doc_len=collection_len / doc_count,
        collection_len=collection_len,
        doc_freq=dict(doc_freq),
        coll_freq=dict(coll_freq),
    )


def bm25_score(
    q_tokens: Sequence[str],
    d_tokens: Sequence[str],
    stats: CorpusStats,
    k1: float = BM25_K1,
    b: float = BM25_B,
) -> float:
    tf = Counter(d_tokens)
    doc_len = len(d_tokens)
    score = 0.0
    for term in q_tokens:
        freq = tf.get(term, 0)
        if freq == 0:
            continue
        df = stats.doc_freq.get(term, 0)
        idf = log((stats.doc_count - df + 0.5) / (df + 0.5) + 1.0)
        denom = freq + k1 * (1.0 - b + b * doc_len / stats.avg_doc_len)
        score += idf * freq * (k1 + 1.0) / denom
    return score


def lm_dirichlet_score(
    q_tokens: Sequence[str],
    d_tokens: Sequence[str],
    stats: CorpusStats,
    mu: float = LM_MU,
) -> float:
    if mu <= 0:
        raise ValueError("mu must be positive")
    tf = Counter(d_tokens)
    doc_len = len(d_tokens)
    score = 0.0
    for term in q_tokens:
        cf = stats.coll_freq.get(term, 0)
        p_collection = (cf if cf > 0 else UNSEEN_CF) / stats.collection_len
        score += log((tf.get(term, 0) + mu * p_collection) / (doc_len + mu))
    return score
