"""Click-derived relevance labels: CTR scores, grade mapping, raw cases.

A query is identified by its exact token sequence (the space-joined key
from the log). Scores are raw click-through rates per (query, document);
an optional pseudo-count smooths them. Grades are assigned by matching the
empirical score distribution to a five-grade target distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil
from typing import Mapping, Sequence, TextIO

from .corpus import QueryLog

# target fractions for grades 0..4, normalized to sum to 1
_RAW_GRADE_FRACTIONS = (0.70, 0.196, 0.098, 0.013, 0.011)
DEFAULT_GRADE_FRACTIONS = tuple(x / sum(_RAW_GRADE_FRACTIONS) for x in _RAW_GRADE_FRACTIONS)
GRADE_COUNT = 5


@dataclass
class ClickStats:
    """Per (query_key, doc_id) impression and click counts."""

    impressions: dict[tuple[str, str], int] = field(default_factory=dict)
    clicks: dict[tuple[str, str], int] = field(default_factory=dict)


@dataclass
class RelevanceLabelSet:
    """Scores in [0, 1] and grades 0..4 per (query_key, doc_id)."""

    scores: dict[tuple[str, str], float] = field(default_factory=dict)
    grades: dict[tuple[str, str], int] = field(default_factory=dict)

    def by_query(self, use_grades: bool = False) -> dict[str, dict[str, float]]:
        source = self.grades if use_grades else self.scores
        out: dict[str, dict[str, float]] = {}
        for (query_key, doc_id), value in source.items():
            out.setdefault(query_key, {})[doc_id] = float(value)
        return out


@dataclass(frozen=True)
class RawClickCase:
    """A single-click session: the displayed docs and the one clicked."""

    query_key: str
    doc_ids: tuple[str, ...]
    clicked_id: str

    def __post_init__(self) -> None:
        if self.clicked_id not in self.doc_ids:
            raise ValueError("clicked doc is not among the displayed docs")


def collect_click_stats(log: QueryLog) -> ClickStats:
    stats = ClickStats()
    for session in log.sessions:
        for imp in session.impressions:
            key = (session.query_key, imp.doc_id)
            stats.impressions[key] = stats.impressions.get(key, 0) + 1
            if imp.clicked:
                stats.clicks[key] = stats.clicks.get(key, 0) + 1
    return stats


def dctr_scores(log: QueryLog, smoothing: float = 0.0) -> RelevanceLabelSet:
    """Click-through-rate scores aggregated over same-query sessions.

    smoothing > 0 applies a pseudo-count: (clicks + s) / (impressions + 2s).
    """
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    stats = collect_click_stats(log)
    labels = RelevanceLabelSet()
    for key, shown in stats.impressions.items():
        clicked = stats.clicks.get(key, 0)
        labels.scores[key] = (clicked + smoothing) / (shown + 2.0 * smoothing)
    return labels


def _quantile_thresholds(sorted_scores: Sequence[float], fractions: Sequence[float]) -> list[float]:
    n = len(sorted_scores)
    thresholds = []
    cumulative = 0.0
    for fraction in fractions[:-1]:
        cumulative += fraction
        idx = min(n - 1, max(0, ceil(cumulative * n) - 1))
        thresholds.append(sorted_scores[idx])
    return thresholds


def map_to_grades(
    labels: RelevanceLabelSet,
    target_fractions: Sequence[float] = DEFAULT_GRADE_FRACTIONS,
) -> tuple[RelevanceLabelSet, tuple[float, ...]]:
    """Fill grades by empirical-quantile thresholds at the target cuts.

    A score's grade is the number of thresholds strictly below it, so tied
    thresholds collapse toward the lower grade and rare high grades stay
    rare. Returns the graded label set and the achieved distribution.
    """
    if len(target_fractions) != GRADE_COUNT:
        raise ValueError(f"need {GRADE_COUNT} grade fractions")
    if abs(sum(target_fractions) - 1.0) > 1e-6:
        raise ValueError("grade fractions must sum to 1")
    graded = RelevanceLabelSet(scores=dict(labels.scores))
    if not labels.scores:
        return graded, (0.0,) * GRADE_COUNT
    ordered = sorted(labels.scores.values())
    thresholds = _quantile_thresholds(ordered, target_fractions)
    counts = [0] * GRADE_COUNT
    for key, score in labels.scores.items():
        grade = sum(1 for t in thresholds if t < score)
        graded.grades[key] = grade
        counts[grade] += 1
    total = len(labels.scores)
    return graded, tuple(c / total for c in counts)


def extract_raw_click_cases(log: QueryLog) -> list[RawClickCase]:
    """Exactly the sessions with a single clicked impression, in order."""
    cases = []
    for session in log.sessions:
        clicked = session.clicked_ids
        if len(clicked) == 1:
            cases.append(
                RawClickCase(
                    session.query_key,
                    tuple(imp.doc_id for imp in session.impressions),
                    clicked[0],
                )
            )
    return cases


def write_label_file(labels: RelevanceLabelSet, stream: TextIO) -> None:
    for key in sorted(labels.scores):
        query_key, doc_id = key
        grade = labels.grades.get(key, 0)
        stream.write(f"{query_key}\t{doc_id}\t{labels.scores[key]!r}\t{grade}\n")


def read_label_file(stream: TextIO) -> RelevanceLabelSet:
    labels = RelevanceLabelSet()
    for line in stream:
        if not line.strip() or line.startswith("#"):
            continue
        query_key, doc_id, score, grade = line.rstrip("\n").split("\t")
        labels.scores[(query_key, doc_id)] = float(score)
        labels.grades[(query_key, doc_id)] = int(grade)
    return labels


def write_raw_cases(cases: Sequence[RawClickCase], stream: TextIO) -> None:
    for case in cases:
        stream.write(f"{case.query_key}\t{case.clicked_id}\t{','.join(case.doc_ids)}\n")


def read_raw_cases(stream: TextIO) -> list[RawClickCase]:
    cases = []
    for line in stream:
        if not line.strip() or line.startswith("#"):
            continue
        query_key, clicked_id, docs = line.rstrip("\n").split("\t")
        cases.append(RawClickCase(query_key, tuple(docs.split(",")), clicked_id))
    return cases
