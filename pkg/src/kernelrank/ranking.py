"""Batch ranking over a query log and the runs-file format.

A runs file holds one `query_key TAB doc_id TAB rank TAB score` line per
candidate, ordered by rank within each query; queries whose every token is
out-of-vocabulary carry an extra `oov_query` flag column.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

from .corpus import (
    DEFAULT_QUERY_CAP,
    DEFAULT_TITLE_CAP,
    QueryLog,
    Vocabulary,
    doc_titles_by_query,
    encode_text,
    query_tokens_by_key,
)
from .model import RankingModel, as_id_array, forward

OOV_FLAG = "oov_query"


def rank_log(
    model: RankingModel,
    vocab: Vocabulary,
    log: QueryLog,
    query_cap: int = DEFAULT_QUERY_CAP,
    title_cap: int = DEFAULT_TITLE_CAP,
) -> dict[str, dict[str, float]]:
    """Score every (query, displayed doc) in the log; docs pooled per query."""
    titles = doc_titles_by_query(log)
    scores: dict[str, dict[str, float]] = {}
    for query_key, query_tokens in query_tokens_by_key(log).items():
        q_ids = as_id_array(encode_text(vocab, query_tokens, query_cap))
        per_doc = {}
        for doc_id, title in titles[query_key].items():
            d_ids = as_id_array(encode_text(vocab, title, title_cap))
            per_doc[doc_id] = forward(model, q_ids, d_ids).score
        scores[query_key] = per_doc
    return scores


def ordered_docs(per_doc: dict[str, float]) -> list[tuple[str, float]]:
    """Docs by score descending, doc_id ascending on ties."""
    return sorted(per_doc.items(), key=lambda item: (-item[1], item[0]))


@dataclass
class RunEntry:
    doc_id: str
    rank: int
    score: float


def write_runs(
    scores: dict[str, dict[str, float]],
    vocab: Vocabulary,
    log: QueryLog,
    stream: TextIO,
) -> None:
    queries = query_tokens_by_key(log)
    for query_key in sorted(scores):
        tokens = queries.get(query_key, ())
        all_oov = bool(tokens) and all(t not in vocab.term_to_id for t in tokens)
        flag = f"\t{OOV_FLAG}" if all_oov else ""
        for rank_pos, (doc_id, value) in enumerate(ordered_docs(scores[query_key]), start=1):
            stream.write(f"{query_key}\t{doc_id}\t{rank_pos}\t{value!r}{flag}\n")


def read_runs(stream: TextIO) -> dict[str, dict[str, float]]:
    scores: dict[str, dict[str, float]] = {}
    for line in stream:
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) not in (4, 5):
            raise ValueError(f"malformed runs line: {line!r}")
        query_key, doc_id, _, value = fields[:4]
        scores.setdefault(query_key, {})[doc_id] = float(value)
    return scores
