"""Forward ranking model: translation matrix, kernel pooling, scoring.

A query-document pair is scored as tanh(w . phi + b) where phi summarizes
the n x m matrix of query/title word cosines. In kernel mode phi[k] is the
log-sum over query words of the k-th RBF kernel's row value, a soft count
of word pairs whose similarity lies near the kernel's mean. Mean and max
pooling are single-feature alternatives used by the model variants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Sequence, TextIO

import numpy as np

from .corpus import TermIdSequence, Vocabulary
from .embeddings import ZERO_NORM_EPS, EmbeddingMatrix

CLAMP_FLOOR = 1e-10
POOLING_MODES = ("kernel", "mean", "max")
MODEL_FORMAT_VERSION = 1

# mus of the ten soft-match kernels, evenly spaced on [-1, 1]
SOFT_KERNEL_MUS = (0.9, 0.7, 0.5, 0.3, 0.1, -0.1, -0.3, -0.5, -0.7, -0.9)
EXACT_MATCH_MU = 1.0
EXACT_MATCH_SIGMA = 1e-3


class EmptyInputError(ValueError):
    """Query or document is empty after encoding."""


class ModelFormatError(ValueError):
    """A model bundle is unreadable or internally inconsistent."""


@dataclass
class KernelBank:
    """The (mu, sigma) pairs defining kernel pooling; mus strictly decreasing."""

    mus: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self) -> None:
        self.mus = np.asarray(self.mus, dtype=np.float64)
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if self.mus.ndim != 1 or self.mus.shape != self.sigmas.shape or self.mus.size < 1:
            raise ValueError("kernel bank needs matching non-empty mu and sigma vectors")
        if np.any(self.sigmas <= 0.0):
            raise ValueError("kernel widths must be positive")
        if np.any(np.diff(self.mus) >= 0.0):
            raise ValueError("kernel means must be strictly decreasing")

    @property
    def count(self) -> int:
        return int(self.mus.size)

    @property
    def kernels(self) -> list[tuple[float, float]]:
        return list(zip(self.mus.tolist(), self.sigmas.tolist()))


def default_kernel_bank(sigma: float = 0.1, exact_sigma: float = EXACT_MATCH_SIGMA) -> KernelBank:
    """Eleven kernels: one exact-match plus ten soft-match bins of width sigma."""
    mus = np.array((EXACT_MATCH_MU,) + SOFT_KERNEL_MUS)
    sigmas = np.array((exact_sigma,) + (sigma,) * len(SOFT_KERNEL_MUS))
    return KernelBank(mus, sigmas)


def exact_match_bank() -> KernelBank:
    """The single-kernel bank of the exact-match variant."""
    return KernelBank(np.array([EXACT_MATCH_MU]), np.array([EXACT_MATCH_SIGMA]))


@dataclass
class RankingParams:
    """Linear combination weights of the ranking layer."""

    w: np.ndarray
    b: float

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = float(self.b)
        if self.w.ndim != 1:
            raise ValueError("w must be a vector")
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise ValueError("ranking parameters must be finite")


@dataclass
class RankingModel:
    embeddings: EmbeddingMatrix
    kernel_bank: KernelBank
    ranking: RankingParams
    pooling_mode: str = "kernel"
    embeddings_frozen: bool = False
    clamp_floor: float = CLAMP_FLOOR

    def __post_init__(self) -> None:
        if self.pooling_mode not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {self.pooling_mode!r}")
        if self.ranking.w.size != self.feature_count:
            raise ValueError(
                f"w has {self.ranking.w.size} entries, expected {self.feature_count}"
            )

    @property
    def feature_count(self) -> int:
        return self.kernel_bank.count if self.pooling_mode == "kernel" else 1


def build_model(
    vocab_size: int,
    dim: int,
    seed: int,
    bank: KernelBank | None = None,
    pooling_mode: str = "kernel",
    embeddings_frozen: bool = False,
) -> RankingModel:
    """Fresh model: seeded random embeddings, zero ranking weights."""
    from .embeddings import init_random

    bank = bank if bank is not None else default_kernel_bank()
    k = bank.count if pooling_mode == "kernel" else 1
    return RankingModel(
        embeddings=init_random(vocab_size, dim, seed),
        kernel_bank=bank,
        ranking=RankingParams(np.zeros(k), 0.0),
        pooling_mode=pooling_mode,
        embeddings_frozen=embeddings_frozen,
    )


def as_id_array(seq: TermIdSequence | Sequence[int] | np.ndarray) -> np.ndarray:
    ids = seq.ids if isinstance(seq, TermIdSequence) else seq
    return np.asarray(ids, dtype=np.intp)


def _unit_rows(emb: EmbeddingMatrix, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    vecs = emb.vectors[ids]
    norms = np.linalg.norm(vecs, axis=1)
    zero = norms < ZERO_NORM_EPS
    unit = vecs / np.where(zero, 1.0, norms)[:, None]
    unit[zero] = 0.0
    return unit, norms, zero


def translation_matrix(
    emb: EmbeddingMatrix,
    q: TermIdSequence | Sequence[int] | np.ndarray,
    d: TermIdSequence | Sequence[int] | np.ndarray,
) -> np.ndarray:
    """n x m matrix of cosines between query and document word vectors."""
    q_ids = as_id_array(q)
    d_ids = as_id_array(d)
    if q_ids.size == 0 or d_ids.size == 0:
        raise EmptyInputError("query and document must be non-empty")
    q_unit, _, _ = _unit_rows(emb, q_ids)
    d_unit, _, _ = _unit_rows(emb, d_ids)
    return q_unit @ d_unit.T


def rbf_kernel_row(kernel: tuple[float, float], row: Sequence[float] | np.ndarray) -> float:
    """Row value of one RBF kernel: sum_j exp(-(M_ij - mu)^2 / (2 sigma^2))."""
    mu, sigma = kernel
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    row = np.asarray(row, dtype=np.float64)
    return float(np.exp(-((row - mu) ** 2) / (2.0 * sigma * sigma)).sum())


def kernel_exponentials(bank: KernelBank, matrix: np.ndarray) -> np.ndarray:
    """Per-entry kernel responses, shape (n, m, K)."""
    diff = matrix[:, :, None] - bank.mus[None, None, :]
    return np.exp(-(diff * diff) / (2.0 * (bank.sigmas ** 2))[None, None, :])


def kernel_row_values(bank: KernelBank, matrix: np.ndarray) -> np.ndarray:
    """Row values for every (query word, kernel), shape (n, K)."""
    return kernel_exponentials(bank, matrix).sum(axis=1)


def kernel_pool(bank: KernelBank, matrix: np.ndarray, clamp_floor: float = CLAMP_FLOOR) -> np.ndarray:
    """Soft-TF features: phi[k] = sum_i log(max(K_k(M_i), clamp_floor))."""
    if matrix.size == 0:
        raise EmptyInputError("translation matrix is empty")
    values = kernel_row_values(bank, matrix)
    return np.log(np.maximum(values, clamp_floor)).sum(axis=0)


def mean_pool(matrix: np.ndarray) -> np.ndarray:
    if matrix.size == 0:
        raise EmptyInputError("translation matrix is empty")
    return np.array([matrix.mean()])


def max_pool(matrix: np.ndarray) -> np.ndarray:
    if matrix.size == 0:
        raise EmptyInputError("translation matrix is empty")
    return np.array([matrix.max(axis=1).sum()])


@dataclass
class ForwardCache:
    """Every intermediate of one scoring pass, kept for backpropagation."""

    q_ids: np.ndarray
    d_ids: np.ndarray
    q_unit: np.ndarray
    d_unit: np.ndarray
    q_norms: np.ndarray
    d_norms: np.ndarray
    q_zero: np.ndarray
    d_zero: np.ndarray
    matrix: np.ndarray
    kernel_exp: np.ndarray | None
    kernel_values: np.ndarray | None
    argmax_cols: np.ndarray | None
    phi: np.ndarray
    pre_activation: float
    score: float


def forward(model: RankingModel, q_ids: np.ndarray, d_ids: np.ndarray) -> ForwardCache:
    """Score one encoded query-document pair, caching all intermediates."""
    if q_ids.size == 0 or d_ids.size == 0:
        raise EmptyInputError("query and document must be non-empty")
    q_unit, q_norms, q_zero = _unit_rows(model.embeddings, q_ids)
    d_unit, d_norms, d_zero = _unit_rows(model.embeddings, d_ids)
    matrix = q_unit @ d_unit.T

    kernel_exp = kernel_values = argmax_cols = None
    if model.pooling_mode == "kernel":
        kernel_exp = kernel_exponentials(model.kernel_bank, matrix)
        kernel_values = kernel_exp.sum(axis=1)
        phi = np.log(np.maximum(kernel_values, model.clamp_floor)).sum(axis=0)
    elif model.pooling_mode == "mean":
        phi = np.array([matrix.mean()])
    else:
        argmax_cols = matrix.argmax(axis=1)
        phi = np.array([matrix.max(axis=1).sum()])

    pre_activation = float(model.ranking.w @ phi + model.ranking.b)
    return ForwardCache(
        q_ids=q_ids,
        d_ids=d_ids,
        q_unit=q_unit,
        d_unit=d_unit,
        q_norms=q_norms,
        d_norms=d_norms,
        q_zero=q_zero,
        d_zero=d_zero,
        matrix=matrix,
        kernel_exp=kernel_exp,
        kernel_values=kernel_values,
        argmax_cols=argmax_cols,
        phi=phi,
        pre_activation=pre_activation,
        score=float(np.tanh(pre_activation)),
    )


def score(model: RankingModel, q: TermIdSequence, d: TermIdSequence) -> tuple[float, ForwardCache]:
    """Ranking score in (-1, 1) for an encoded query-document pair."""
    cache = forward(model, as_id_array(q), as_id_array(d))
    return cache.score, cache


def rank(
    model: RankingModel,
    q: TermIdSequence,
    candidates: Sequence[tuple[str, TermIdSequence]],
) -> list[tuple[str, float]]:
    """Candidates ordered by score descending, doc_id ascending on ties."""
    if not candidates:
        raise ValueError("no candidates to rank")
    q_ids = as_id_array(q)
    scored = [
        (doc_id, forward(model, q_ids, as_id_array(d)).score) for doc_id, d in candidates
    ]
    return sorted(scored, key=lambda item: (-item[1], item[0]))


def save_model(
    model: RankingModel,
    vocab: Vocabulary,
    stream: TextIO,
    encoding: dict[str, Any] | None = None,
) -> None:
    """Write a self-describing JSON bundle (model + vocabulary + encoding)."""
    if model.embeddings.rows != vocab.size:
        raise ValueError("embedding rows do not match vocabulary size")
    bundle = {
        "format_version": MODEL_FORMAT_VERSION,
        "pooling_mode": model.pooling_mode,
        "embeddings_frozen": model.embeddings_frozen,
        "clamp_floor": model.clamp_floor,
        "kernels": model.kernel_bank.kernels,
        "w": model.ranking.w.tolist(),
        "b": model.ranking.b,
        "vocabulary": {"terms": vocab.id_to_term, "frequencies": vocab.frequencies},
        "embedding_dim": model.embeddings.dim,
        "embedding_rows": model.embeddings.vectors.tolist(),
        "encoding": encoding or {},
    }
    json.dump(bundle, stream, separators=(",", ":"))


def load_model(stream: TextIO) -> tuple[RankingModel, Vocabulary, dict[str, Any]]:
    """Load a bundle written by save_model."""
    try:
        bundle = json.load(stream)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"unreadable model bundle: {exc}") from exc
    if bundle.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {bundle.get('format_version')!r}")
    terms = bundle["vocabulary"]["terms"]
    freqs = bundle["vocabulary"]["frequencies"]
    vocab = Vocabulary({t: i for i, t in enumerate(terms)}, list(terms), list(freqs))
    vectors = np.array(bundle["embedding_rows"], dtype=np.float64)
    if vectors.shape != (vocab.size, bundle["embedding_dim"]):
        raise ModelFormatError("embedding shape does not match vocabulary and dim")
    kernels = bundle["kernels"]
    bank = KernelBank(
        np.array([k[0] for k in kernels]), np.array([k[1] for k in kernels])
    )
    model = RankingModel(
        embeddings=EmbeddingMatrix(vectors),
        kernel_bank=bank,
        ranking=RankingParams(np.array(bundle["w"]), bundle["b"]),
        pooling_mode=bundle["pooling_mode"],
        embeddings_frozen=bundle["embeddings_frozen"],
        clamp_floor=bundle["clamp_floor"],
    )
    return model, vocab, bundle.get("encoding", {})
