"""Finite-difference verification of the analytic backward pass.

Draws random small models and preference pairs, then compares every
analytic gradient component (w, b, each touched embedding coordinate)
against central finite differences of the pair loss. Draws whose loss sits
near the hinge kink, whose kernel row values sit near the log-clamp floor,
or whose distinct-word similarities graze the razor-thin exact-match
kernel are redrawn: a perturbation there crosses a non-smooth or
ill-conditioned region and the comparison would measure the wrong thing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import RankingModel, RankingParams, default_kernel_bank, forward
from .embeddings import EmbeddingMatrix
from .training import Gradients, backward, hinge_loss

HINGE_MARGIN = 0.02
SATURATION_LIMIT = 4.0
CLAMP_ZONE = (0.2, 5.0)
SHARP_SIMILARITY_LIMIT = 0.95


@dataclass
class GradCheckReport:
    models_checked: int
    params_checked: int
    redraws: int
    max_rel_err: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.models_checked > 0 and not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradcheck {status}: {self.models_checked} models, "
            f"{self.params_checked} parameters, {self.redraws} redraws, "
            f"max relative error {self.max_rel_err:.3e}, "
            f"{len(self.failures)} failures"
        )


def _pair_loss(model: RankingModel, q: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> float:
    f_pos = forward(model, q, pos).score
    f_neg = forward(model, q, neg).score
    return hinge_loss(f_pos, f_neg)


def _draw_case(rng: np.random.Generator, vocab_size: int, dim: int):
    bank = default_kernel_bank()
    vectors = rng.uniform(-0.1, 0.1, size=(vocab_size, dim))
    q = rng.integers(0, vocab_size, size=rng.integers(1, 4))
    pos = rng.integers(0, vocab_size, size=rng.integers(1, 7))
    neg = rng.integers(0, vocab_size, size=rng.integers(1, 7))
    model = RankingModel(
        embeddings=EmbeddingMatrix(vectors),
        kernel_bank=bank,
        ranking=RankingParams(np.zeros(bank.count), 0.0),
    )
    # scale w so the pre-activation stays out of tanh saturation
    cache_pos = forward(model, q, pos)
    cache_neg = forward(model, q, neg)
    phi_scale = max(np.abs(cache_pos.phi).max(), np.abs(cache_neg.phi).max(), 1.0)
    w = rng.uniform(-1.0, 1.0, size=bank.count) * (2.0 / (phi_scale * np.sqrt(bank.count)))
    b = float(rng.uniform(-0.5, 0.5))
    model.ranking = RankingParams(w, b)
    return model, q.astype(np.intp), pos.astype(np.intp), neg.astype(np.intp)


def _acceptable(model: RankingModel, q: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> bool:
    cache_pos = forward(model, q, pos)
    cache_neg = forward(model, q, neg)
    loss = hinge_loss(cache_pos.score, cache_neg.score)
    if loss <= HINGE_MARGIN:
        return False
    for cache, d_ids in ((cache_pos, pos), (cache_neg, neg)):
        if abs(cache.pre_activation) > SATURATION_LIMIT:
            return False
        values = cache.kernel_values
        lo = model.clamp_floor * CLAMP_ZONE[0]
        hi = model.clamp_floor * CLAMP_ZONE[1]
        if np.any((values > lo) & (values < hi)):
            return False
        distinct = q[:, None] != d_ids[None, :]
        if np.any(distinct & (cache.matrix > SHARP_SIMILARITY_LIMIT)):
            return False
    return True


def _compare(
    analytic: float, numeric: float, rel_tol: float, abs_tol: float
) -> tuple[bool, float]:
    diff = abs(analytic - numeric)
    scale = max(abs(analytic), abs(numeric))
    if diff <= abs_tol:
        return True, 0.0
    rel = diff / scale
    return rel <= rel_tol, rel


def run_gradient_check(
    n_models: int = 100,
    seed: int = 0,
    vocab_size: int = 50,
    dim: int = 8,
    h: float = 1e-5,
    rel_tol: float = 1e-4,
    abs_tol: float = 1e-8,
    max_redraws_per_model: int = 200,
) -> GradCheckReport:
    """Compare analytic and central finite-difference gradients."""
    rng = np.random.default_rng(seed)
    params_checked = 0
    redraws = 0
    max_rel = 0.0
    failures: list[str] = []
    checked = 0

    for index in range(n_models):
        for attempt in range(max_redraws_per_model):
            model, q, pos, neg = _draw_case(rng, vocab_size, dim)
            if _acceptable(model, q, pos, neg):
                break
            redraws += 1
        else:
            failures.append(f"model {index}: no acceptable draw after redraws")
            continue
        checked += 1

        grads = backward(model, forward(model, q, pos), forward(model, q, neg))

        def numeric_at(setter, getter) -> float:
            base = getter()
            setter(base + h)
            up = _pair_loss(model, q, pos, neg)
            setter(base - h)
            down = _pair_loss(model, q, pos, neg)
            setter(base)
            return (up - down) / (2.0 * h)

        components: list[tuple[str, float, float]] = []
        w = model.ranking.w
        for k in range(w.size):
            def set_w(value, k=k):
                w[k] = value
            numeric = numeric_at(set_w, lambda k=k: w[k])
            components.append((f"w[{k}]", float(grads.d_w[k]), numeric))

        def set_b(value):
            model.ranking.b = value
        numeric = numeric_at(set_b, lambda: model.ranking.b)
        components.append(("b", grads.d_b, numeric))

        vectors = model.embeddings.vectors
        touched = sorted(set(q.tolist()) | set(pos.tolist()) | set(neg.tolist()))
        for row in touched:
            analytic_row = grads.d_embeddings.get(row, np.zeros(dim))
            for col in range(dim):
                def set_v(value, row=row, col=col):
                    vectors[row, col] = value
                numeric = numeric_at(set_v, lambda row=row, col=col: vectors[row, col])
                components.append((f"v[{row},{col}]", float(analytic_row[col]), numeric))

        for name, analytic, numeric in components:
            params_checked += 1
            ok, rel = _compare(analytic, numeric, rel_tol, abs_tol)
            max_rel = max(max_rel, rel)
            if not ok:
                failures.append(
                    f"model {index} {name}: analytic {analytic:.6e} vs numeric {numeric:.6e}"
                )

    return GradCheckReport(checked, params_checked, redraws, max_rel, failures)
