"""Synthetic query-log generator with planted soft-match relevance.

The world plants relevance through a hidden synonym map: a relevant title
matches each query term either literally (exact channel) or through the
term's hidden synonym (soft channel). Clicks are sampled with 1/rank
examination bias plus a configurable noise rate, so derived CTR labels
are a noisy but correlated proxy for the planted truth. Everything is
driven by one seed; identical specs produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .corpus import Impression, QueryLog, Session

CONTENT_SHARE = 0.3
OFF_TOPIC_PROB = 0.35
CLICK_ATTRACTION = {0: 0.0, 1: 0.5, 2: 0.95}


@dataclass
class SyntheticSpec:
    vocab_size: int = 2000
    query_count: int = 5000
    docs_per_query: int = 10
    synonym_density: float = 0.5
    click_noise: float = 0.1
    seed: int = 0
    sessions_per_query: int = 8
    test_fraction: float = 0.2
    title_len: int = 6
    # chance a synonym-capable term is matched through its synonym; high by
    # design so the planted world stresses soft matching
    synonym_channel_prob: float = 0.9

    def __post_init__(self) -> None:
        if min(self.vocab_size, self.query_count, self.docs_per_query,
               self.sessions_per_query, self.title_len) < 1:
            raise ValueError("all synthetic sizes must be positive")
        if self.vocab_size < 20:
            raise ValueError("vocab_size must be at least 20")
        if not 0.0 <= self.synonym_density <= 1.0:
            raise ValueError("synonym_density must lie in [0, 1]")
        if not 0.0 <= self.click_noise < 0.5:
            raise ValueError("click_noise must lie in [0, 0.5)")
        if not 0.0 < self.test_fraction < 0.5:
            raise ValueError("test_fraction must lie in (0, 0.5)")
        if not 0.0 <= self.synonym_channel_prob <= 1.0:
            raise ValueError("synonym_channel_prob must lie in [0, 1]")


@dataclass
class SyntheticWorld:
    train_log: QueryLog
    test_log: QueryLog
    truth: dict[tuple[str, str], int]
    synonym_map: dict[str, str]


def _make_terms(spec: SyntheticSpec, rng: np.random.Generator):
    n_content = max(4, round(CONTENT_SHARE * spec.vocab_size))
    content = [f"c{i:04d}" for i in range(n_content)]
    with_synonym = rng.random(n_content) < spec.synonym_density
    synonym_map = {
        content[i]: f"s{i:04d}" for i in range(n_content) if with_synonym[i]
    }
    n_filler = max(5, spec.vocab_size - n_content - len(synonym_map))
    filler = [f"f{i:04d}" for i in range(n_filler)]
    return content, synonym_map, filler


def _match_token(
    term: str, synonym_map: dict[str, str], channel_prob: float, rng: np.random.Generator
) -> str:
    synonym = synonym_map.get(term)
    if synonym is not None and rng.random() < channel_prob:
        return synonym
    return term


def _make_title(
    matched: list[str],
    query_terms: tuple[str, str],
    content: list[str],
    filler: list[str],
    rng: np.random.Generator,
    length: int,
) -> tuple[str, ...]:
    tokens = list(matched)
    if rng.random() < OFF_TOPIC_PROB:
        # off-query content words force matching against the query itself
        other = content[int(rng.integers(len(content)))]
        if other not in query_terms:
            tokens.append(other)
    while len(tokens) < length:
        tokens.append(filler[int(rng.integers(len(filler)))])
    rng.shuffle(tokens)
    return tuple(tokens)


def _plant_docs(
    query_index: int,
    query_terms: tuple[str, str],
    spec: SyntheticSpec,
    content: list[str],
    synonym_map: dict[str, str],
    filler: list[str],
    rng: np.random.Generator,
) -> list[tuple[str, tuple[str, ...], int]]:
    per_grade = max(1, round(0.2 * spec.docs_per_query))
    grades = [2] * per_grade + [1] * per_grade
    grades += [0] * max(1, spec.docs_per_query - len(grades))
    grades = grades[: max(spec.docs_per_query, 3)]
    # doc ids must not encode the grade: score ties break by doc_id
    rng.shuffle(grades)
    docs = []
    for j, grade in enumerate(grades):
        if grade == 2:
            matched = [_match_token(t, synonym_map, spec.synonym_channel_prob, rng)
                       for t in query_terms]
        elif grade == 1:
            pick = query_terms[int(rng.integers(2))]
            matched = [_match_token(pick, synonym_map, spec.synonym_channel_prob, rng)]
        else:
            matched = []
        title = _make_title(matched, query_terms, content, filler, rng, spec.title_len)
        docs.append((f"q{query_index:05d}d{j:02d}", title, grade))
    return docs


def _simulate_session(
    query_tokens: tuple[str, str],
    docs: list[tuple[str, tuple[str, ...], int]],
    noise: float,
    rng: np.random.Generator,
) -> Session:
    order = rng.permutation(len(docs))
    impressions = []
    for rank, idx in enumerate(order, start=1):
        doc_id, title, grade = docs[idx]
        clicked = False
        dwell = None
        if rng.random() < 1.0 / rank:
            p_click = noise + (1.0 - noise) * CLICK_ATTRACTION[grade]
            if rng.random() < p_click:
                clicked = True
                dwell = int(rng.integers(2000, 60000))
        impressions.append(Impression(doc_id, title, clicked, dwell))
    return Session(query_tokens, tuple(impressions))


def generate(spec: SyntheticSpec) -> SyntheticWorld:
    """Build train/test logs and the hidden ground-truth grades."""
    rng = np.random.default_rng(spec.seed)
    content, synonym_map, filler = _make_terms(spec, rng)

    seen: set[tuple[str, str]] = set()
    queries: list[tuple[str, str]] = []
    while len(queries) < spec.query_count:
        a, b = rng.choice(len(content), size=2, replace=False)
        pair = (content[int(a)], content[int(b)])
        if pair not in seen:
            seen.add(pair)
            queries.append(pair)

    n_test = max(1, round(spec.test_fraction * spec.query_count))
    test_queries = queries[:n_test]
    train_queries = queries[n_test:]

    truth: dict[tuple[str, str], int] = {}
    train_sessions: list[Session] = []
    test_sessions: list[Session] = []
    for qi, query_terms in enumerate(queries):
        docs = _plant_docs(qi, query_terms, spec, content, synonym_map, filler, rng)
        query_key = " ".join(query_terms)
        for doc_id, _, grade in docs:
            truth[(query_key, doc_id)] = grade
        target = test_sessions if qi < n_test else train_sessions
        for _ in range(spec.sessions_per_query):
            target.append(_simulate_session(query_terms, docs, spec.click_noise, rng))

    assert len(train_queries) + len(test_queries) == spec.query_count
    return SyntheticWorld(
        train_log=QueryLog(train_sessions, split_tag="train"),
        test_log=QueryLog(test_sessions, split_tag="test"),
        truth=truth,
        synonym_map=synonym_map,
    )


def write_truth(truth: dict[tuple[str, str], int], stream: TextIO) -> None:
    for (query_key, doc_id) in sorted(truth):
        stream.write(f"{query_key}\t{doc_id}\t{truth[(query_key, doc_id)]}\n")


def read_truth(stream: TextIO) -> dict[tuple[str, str], int]:
    truth = {}
    for line in stream:
        if not line.strip():
            continue
        query_key, doc_id, grade = line.rstrip("\n").split("\t")
        truth[(query_key, doc_id)] = int(grade)
    return truth
