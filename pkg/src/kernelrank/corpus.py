"""Query-log parsing, vocabulary construction, and term-id encoding.

Input logs are pre-tokenized: tokens are whitespace-separated strings and
must not contain the tab, pipe, or semicolon characters that delimit the
log format. Segmentation, stemming, and other normalization happen
upstream.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, TextIO

UNK_TOKEN = "<unk>"
UNK_ID = 0

DEFAULT_QUERY_CAP = 16
DEFAULT_TITLE_CAP = 64


class QueryLogFormatError(ValueError):
    """The stream as a whole is unusable (empty or mostly malformed)."""


@dataclass(frozen=True)
class Impression:
    """One displayed document within a session."""

    doc_id: str
    title_tokens: tuple[str, ...]
    clicked: bool
    dwell_ms: int | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("impression needs a doc_id")
        if not self.title_tokens:
            raise ValueError(f"impression {self.doc_id!r} has an empty title")
        if self.dwell_ms is not None and self.dwell_ms < 0:
            raise ValueError(f"impression {self.doc_id!r} has negative dwell time")


@dataclass(frozen=True)
class Session:
    """One search session: a query plus its displayed documents and clicks."""

    query_tokens: tuple[str, ...]
    impressions: tuple[Impression, ...]

    def __post_init__(self) -> None:
        if not self.query_tokens:
            raise ValueError("session has no query tokens")
        if not self.impressions:
            raise ValueError("session has no impressions")
        ids = [imp.doc_id for imp in self.impressions]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate doc_id within a session")

    @property
    def query_key(self) -> str:
        return " ".join(self.query_tokens)

    @property
    def clicked_ids(self) -> tuple[str, ...]:
        return tuple(imp.doc_id for imp in self.impressions if imp.clicked)


@dataclass
class QueryLog:
    """An ordered collection of sessions from one split of the log."""

    sessions: list[Session]
    split_tag: str = "train"
    skipped_lines: int = 0


def _parse_impression(record: str) -> Impression:
    parts = record.split("|")
    if len(parts) not in (3, 4):
        raise ValueError(f"impression record needs 3 or 4 fields: {record!r}")
    doc_id, title, clicked = parts[0], parts[1], parts[2]
    if clicked not in ("0", "1"):
        raise ValueError(f"clicked flag must be 0 or 1: {record!r}")
    dwell_ms = None
    if len(parts) == 4 and parts[3] != "":
        dwell_ms = int(parts[3])
    return Impression(doc_id, tuple(title.split()), clicked == "1", dwell_ms)


def parse_session_line(line: str, lowercase: bool = False) -> Session:
    """Parse one `query TAB doc|title|clicked|dwell;...` log line."""
    if lowercase:
        line = line.lower()
    fields = line.split("\t")
    if len(fields) != 2:
        raise ValueError(f"expected query TAB doc-records, got {len(fields)} fields")
    query_tokens = tuple(fields[0].split())
    impressions = tuple(_parse_impression(rec) for rec in fields[1].split(";"))
    return Session(query_tokens, impressions)


def parse_query_log(
    lines: Iterable[str], split_tag: str = "train", lowercase: bool = False
) -> QueryLog:
    """Parse a line-oriented query-log stream.

    Malformed lines are skipped and counted in ``skipped_lines``. Raises
    QueryLogFormatError when the stream is empty or more than half the
    lines are malformed.
    """
    sessions: list[Session] = []
    skipped = 0
    total = 0
    for line in lines:
        total += 1
        try:
            sessions.append(parse_session_line(line.rstrip("\n"), lowercase=lowercase))
        except ValueError:
            skipped += 1
    if total == 0:
        raise QueryLogFormatError("empty query-log stream")
    if skipped * 2 > total:
        raise QueryLogFormatError(f"{skipped} of {total} lines malformed")
    return QueryLog(sessions, split_tag=split_tag, skipped_lines=skipped)


def serialize_session(session: Session) -> str:
    records = []
    for imp in session.impressions:
        rec = f"{imp.doc_id}|{' '.join(imp.title_tokens)}|{int(imp.clicked)}"
        if imp.dwell_ms is not None:
            rec += f"|{imp.dwell_ms}"
        records.append(rec)
    return " ".join(session.query_tokens) + "\t" + ";".join(records)


def serialize_query_log(log: QueryLog, stream: TextIO) -> None:
    for session in log.sessions:
        stream.write(serialize_session(session) + "\n")


@dataclass
class Vocabulary:
    """Bijective term/id map with a reserved trainable UNK at id 0."""

    term_to_id: dict[str, int]
    id_to_term: list[str]
    frequencies: list[int]
    unk_id: int = UNK_ID

    @property
    def size(self) -> int:
        return len(self.id_to_term)

    def id_for(self, term: str) -> int:
        return self.term_to_id.get(term, self.unk_id)


@dataclass(frozen=True)
class TermIdSequence:
    """Encoded token sequence, truncated to a configured cap."""

    ids: tuple[int, ...]
    original_length: int


def build_vocabulary(log: QueryLog, min_count: int = 1) -> Vocabulary:
    """Build a vocabulary over all query and title tokens of the log.

    Ids are assigned by descending corpus frequency, ties broken
    lexicographically; tokens below min_count fall back to UNK.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for session in log.sessions:
        counts.update(session.query_tokens)
        for imp in session.impressions:
            counts.update(imp.title_tokens)
    counts.pop(UNK_TOKEN, None)
    kept = sorted(
        (term for term, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    id_to_term = [UNK_TOKEN] + kept
    frequencies = [0] + [counts[t] for t in kept]
    term_to_id = {term: i for i, term in enumerate(id_to_term)}
    return Vocabulary(term_to_id, id_to_term, frequencies)


def encode_text(vocab: Vocabulary, tokens: Iterable[str], cap: int) -> TermIdSequence:
    """Map tokens to ids (OOV -> UNK), keeping only the first cap tokens."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    tokens = list(tokens)
    ids = tuple(vocab.id_for(t) for t in tokens[:cap])
    return TermIdSequence(ids, original_length=len(tokens))


def save_vocabulary(vocab: Vocabulary, stream: TextIO) -> None:
    for i, term in enumerate(vocab.id_to_term):
        stream.write(f"{term}\t{i}\t{vocab.frequencies[i]}\n")


def load_vocabulary(stream: TextIO) -> Vocabulary:
    id_to_term: list[str] = []
    frequencies: list[int] = []
    for line in stream:
        term, ident, freq = line.rstrip("\n").split("\t")
        if int(ident) != len(id_to_term):
            raise ValueError(f"vocabulary ids out of order at {term!r}")
        id_to_term.append(term)
        frequencies.append(int(freq))
    if not id_to_term or id_to_term[0] != UNK_TOKEN:
        raise ValueError("vocabulary file must start with the UNK entry")
    term_to_id = {term: i for i, term in enumerate(id_to_term)}
    return Vocabulary(term_to_id, id_to_term, frequencies)


def doc_titles_by_query(log: QueryLog) -> dict[str, dict[str, tuple[str, ...]]]:
    """Collect displayed titles per query key (first occurrence wins)."""
    titles: dict[str, dict[str, tuple[str, ...]]] = {}
    for session in log.sessions:
        per_query = titles.setdefault(session.query_key, {})
        for imp in session.impressions:
            per_query.setdefault(imp.doc_id, imp.title_tokens)
    return titles


def query_tokens_by_key(log: QueryLog) -> Mapping[str, tuple[str, ...]]:
    out: dict[str, tuple[str, ...]] = {}
    for session in log.sessions:
        out.setdefault(session.query_key, session.query_tokens)
    return out
