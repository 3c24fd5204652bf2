"""Trainable word-embedding matrix: initialization, text I/O, cosine.

All arithmetic is float64; vectors are persisted as decimal text with 8
significant digits (word2vec text format, header optional).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .corpus import Vocabulary

ZERO_NORM_EPS = 1e-12
INIT_SCALE = 0.1


class EmbeddingFormatError(ValueError):
    """An embedding text stream does not match the expected layout."""


@dataclass
class EmbeddingMatrix:
    """Dense |V| x L matrix; row i is the vector of vocabulary id i."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1 or self.vectors.shape[1] < 1:
            raise ValueError("embedding matrix must be 2-D and non-empty")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding matrix contains non-finite entries")

    @property
    def rows(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def init_random(vocab_size: int, dim: int, seed: int) -> EmbeddingMatrix:
    """Seeded i.i.d. uniform init on [-0.1, 0.1]."""
    if vocab_size < 1 or dim < 1:
        raise ValueError("vocab_size and dim must be >= 1")
    rng = np.random.default_rng(seed)
    return EmbeddingMatrix(rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, dim)))


def _looks_like_header(fields: list[str], dim: int) -> bool:
    if len(fields) != 2 or dim == 1:
        return False
    try:
        int(fields[0]), int(fields[1])
    except ValueError:
        return False
    return True


def load_embeddings(
    stream: TextIO, vocab: Vocabulary, dim: int, seed: int
) -> tuple[EmbeddingMatrix, float]:
    """Load word2vec-format text vectors for the vocabulary.

    Rows for terms present in both the stream and the vocabulary are
    copied from the file; every other row (UNK included) keeps its seeded
    random initialization. Returns the matrix and the fraction of
    vocabulary terms covered by the file.
    """
    emb = init_random(vocab.size, dim, seed)
    covered: set[int] = set()
    for lineno, line in enumerate(stream, start=1):
        fields = line.split()
        if not fields:
            continue
        if lineno == 1 and _looks_like_header(fields, dim):
            continue
        if len(fields) != dim + 1:
            raise EmbeddingFormatError(
                f"line {lineno}: expected term plus {dim} values, got {len(fields) - 1}"
            )
        term = fields[0]
        row = vocab.term_to_id.get(term)
        if row is None:
            continue
        emb.vectors[row] = np.array([float(x) for x in fields[1:]])
        covered.add(row)
    return emb, len(covered) / vocab.size


def save_embeddings(emb: EmbeddingMatrix, vocab: Vocabulary, stream: TextIO) -> None:
    """Write every row in id order, loadable by load_embeddings."""
    if emb.rows != vocab.size:
        raise ValueError("embedding rows do not match vocabulary size")
    for i, term in enumerate(vocab.id_to_term):
        values = " ".join(f"{x:.8g}" for x in emb.vectors[i])
        stream.write(f"{term} {values}\n")


def cosine(emb: EmbeddingMatrix, id_a: int, id_b: int) -> float:
    """Cosine similarity of two rows; 0 when either norm is ~zero."""
    a = emb.vectors[id_a]
    b = emb.vectors[id_b]
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        return 0.0
    return float(a @ b / (na * nb))
