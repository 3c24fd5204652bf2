"""Desk-scale ablation experiments on the synthetic fixture.

Trains model variants on one planted-synonym world and compares their
held-out MRR over single-click sessions: the full kernel model against the
exact-match-only, frozen-embedding, and pooling variants. The same driver
re-runs with different kernel widths for the width-robustness sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .clicks import dctr_scores, extract_raw_click_cases
from .corpus import QueryLog, Vocabulary, build_vocabulary
from .metrics import SignificanceReport, mrr, permutation_test, reciprocal_rank
from .model import RankingModel, build_model, default_kernel_bank, exact_match_bank
from .ranking import rank_log
from .synth import SyntheticSpec, SyntheticWorld, generate
from .training import TrainConfig, make_pairs, train

VARIANTS = ("full", "exact", "frozen", "mean", "max")


@dataclass
class ExperimentConfig:
    synonym_density: float = 0.5
    click_noise: float = 0.1
    seed: int = 7
    sigma: float = 0.1
    vocab_size: int = 400
    query_count: int = 1500
    docs_per_query: int = 8
    sessions_per_query: int = 24
    embedding_dim: int = 12
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(max_epochs=14, patience_epochs=5, lr=0.002, seed=7)
    )

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            vocab_size=self.vocab_size,
            query_count=self.query_count,
            docs_per_query=self.docs_per_query,
            synonym_density=self.synonym_density,
            click_noise=self.click_noise,
            seed=self.seed,
            sessions_per_query=self.sessions_per_query,
        )


@dataclass
class Fixture:
    world: SyntheticWorld
    vocab: Vocabulary
    pairs: list


@dataclass
class VariantResult:
    name: str
    mrr: float
    per_case: dict[str, float]
    selected_epoch: int


@dataclass
class AblationResult:
    config: ExperimentConfig
    variants: dict[str, VariantResult]

    def compare(self, a: str, b: str, iterations: int = 20_000) -> SignificanceReport:
        return permutation_test(
            self.variants[a].per_case,
            self.variants[b].per_case,
            iterations=iterations,
            seed=self.config.seed,
        )


def build_fixture(config: ExperimentConfig) -> Fixture:
    world = generate(config.synthetic_spec())
    vocab = build_vocabulary(world.train_log)
    labels = dctr_scores(world.train_log)
    pairs = make_pairs(labels.by_query(), world.train_log, vocab, seed=config.seed)
    return Fixture(world, vocab, pairs)


def _variant_model(name: str, config: ExperimentConfig, vocab_size: int) -> RankingModel:
    if name == "full":
        return build_model(
            vocab_size, config.embedding_dim, config.seed,
            bank=default_kernel_bank(sigma=config.sigma),
        )
    if name == "exact":
        return build_model(
            vocab_size, config.embedding_dim, config.seed, bank=exact_match_bank()
        )
    if name == "frozen":
        return build_model(
            vocab_size, config.embedding_dim, config.seed,
            bank=default_kernel_bank(sigma=config.sigma), embeddings_frozen=True,
        )
    if name in ("mean", "max"):
        return build_model(
            vocab_size, config.embedding_dim, config.seed, pooling_mode=name
        )
    raise ValueError(f"unknown variant {name!r}")


def raw_case_values(
    model: RankingModel, vocab: Vocabulary, log: QueryLog
) -> dict[str, float]:
    """Reciprocal rank per single-click case, keyed for paired comparison."""
    scores = rank_log(model, vocab, log)
    values: dict[str, float] = {}
    for i, case in enumerate(extract_raw_click_cases(log)):
        ranked = sorted(case.doc_ids, key=lambda d: (-scores[case.query_key][d], d))
        values[f"{i}:{case.query_key}"] = reciprocal_rank(ranked, case.clicked_id, case.query_key)
    if not values:
        raise ValueError("test log has no single-click sessions")
    return values


def run_variant(name: str, config: ExperimentConfig, fixture: Fixture) -> VariantResult:
    model = _variant_model(name, config, fixture.vocab.size)
    result = train(model, fixture.pairs, config.train)
    per_case = raw_case_values(result.model, fixture.vocab, fixture.world.test_log)
    return VariantResult(
        name=name,
        mrr=float(np.mean(list(per_case.values()))),
        per_case=per_case,
        selected_epoch=result.selected_epoch,
    )


def run_ablation(
    config: ExperimentConfig,
    variants: tuple[str, ...] = ("full", "exact", "frozen"),
    fixture: Fixture | None = None,
) -> AblationResult:
    fixture = fixture if fixture is not None else build_fixture(config)
    results = {name: run_variant(name, config, fixture) for name in variants}
    return AblationResult(config, results)


def run_sigma_sweep(
    config: ExperimentConfig,
    sigmas: tuple[float, ...] = (0.05, 0.1, 0.2),
    fixture: Fixture | None = None,
) -> dict[float, VariantResult]:
    """Full-model results at each kernel width, on one shared fixture."""
    fixture = fixture if fixture is not None else build_fixture(config)
    out = {}
    for sigma in sigmas:
        cfg = replace(config, sigma=sigma)
        out[sigma] = run_variant("full", cfg, fixture)
    return out
