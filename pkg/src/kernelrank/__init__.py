"""Kernel-pooled neural ranking over query logs, trained end-to-end from clicks."""

from .corpus import (
    QueryLog,
    Session,
    TermIdSequence,
    Vocabulary,
    build_vocabulary,
    encode_text,
    parse_query_log,
)
from .embeddings import EmbeddingMatrix, cosine, init_random, load_embeddings, save_embeddings
from .model import (
    KernelBank,
    RankingModel,
    RankingParams,
    default_kernel_bank,
    exact_match_bank,
    kernel_pool,
    load_model,
    max_pool,
    mean_pool,
    rank,
    rbf_kernel_row,
    save_model,
    score,
    translation_matrix,
)
from .training import (
    AdamState,
    Gradients,
    PreferencePair,
    TrainConfig,
    adam_step,
    backward,
    hinge_loss,
    make_pairs,
    train,
)

__all__ = [
    "AdamState",
    "EmbeddingMatrix",
    "Gradients",
    "KernelBank",
    "PreferencePair",
    "QueryLog",
    "RankingModel",
    "RankingParams",
    "Session",
    "TermIdSequence",
    "TrainConfig",
    "Vocabulary",
    "adam_step",
    "backward",
    "build_vocabulary",
    "cosine",
    "default_kernel_bank",
    "encode_text",
    "exact_match_bank",
    "hinge_loss",
    "init_random",
    "kernel_pool",
    "load_embeddings",
    "load_model",
    "make_pairs",
    "max_pool",
    "mean_pool",
    "parse_query_log",
    "rank",
    "rbf_kernel_row",
    "save_embeddings",
    "save_model",
    "score",
    "train",
    "translation_matrix",
]
