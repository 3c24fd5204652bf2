"""Pairwise training: hinge loss, analytic backpropagation, Adam, early stopping.

The backward pass composes, per document branch:

    d tanh            = 1 - f^2
    d (w.phi + b)     = phi for w, 1 for b
    d phi[k] / d K_ik = 1 / K_ik   (0 where the log clamp is engaged)
    d K_ik / d M_ij   = exp(-(M_ij - mu_k)^2 / (2 sigma_k^2)) (mu_k - M_ij) / sigma_k^2
    d M_ij / d v      = cosine quotient rule, zero for ~zero-norm rows

with the positive document pushed up and the negative pushed down. Each
kernel therefore pulls word-pair similarities toward its own mean with a
force proportional to the kernel response. Mean pooling spreads the
feature gradient uniformly (1/(n m)); max pooling routes it to each row's
argmax entry (first column on ties).

backward() is the per-pair reference implementation; the training loop
runs a padded, batch-vectorized path with identical math (covered by a
test pinning the two against each other).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import (
    DEFAULT_QUERY_CAP,
    DEFAULT_TITLE_CAP,
    QueryLog,
    TermIdSequence,
    Vocabulary,
    doc_titles_by_query,
    encode_text,
    query_tokens_by_key,
)
from .embeddings import ZERO_NORM_EPS
from .model import ForwardCache, RankingModel, forward


class OptimizationError(RuntimeError):
    """Non-finite gradients or other unrecoverable optimizer state."""


class EmptyTrainingSetError(ValueError):
    """No preference pairs could be built from the labels."""


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr: float = 0.001
    eps: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    patience_epochs: int = 5
    max_epochs: int = 30
    validation_fraction: float = 0.05
    seed: int = 0
    grad_clip: float | None = None

    def __post_init__(self) -> None:
        positive = (
            self.batch_size, self.lr, self.eps, self.beta1, self.beta2,
            self.patience_epochs, self.max_epochs,
        )
        if any(x <= 0 for x in positive):
            raise ValueError("all training hyperparameters must be positive")
        if not 0.0 < self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in (0, 0.5]")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")


@dataclass(frozen=True)
class PreferencePair:
    """One training instance: doc_pos should outrank doc_neg for query."""

    query: TermIdSequence
    doc_pos: TermIdSequence
    doc_neg: TermIdSequence
    pos_id: str
    neg_id: str

    def __post_init__(self) -> None:
        if not (self.query.ids and self.doc_pos.ids and self.doc_neg.ids):
            raise ValueError("preference pair has an empty sequence")
        if self.pos_id == self.neg_id:
            raise ValueError("preference pair needs distinct documents")


@dataclass
class Gradients:
    """Pair-loss gradients; d_embeddings holds only touched rows."""

    d_w: np.ndarray
    d_b: float
    d_embeddings: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, feature_count: int) -> "Gradients":
        return cls(np.zeros(feature_count), 0.0, {})

    def add(self, other: "Gradients") -> None:
        self.d_w += other.d_w
        self.d_b += other.d_b
        for row, vec in other.d_embeddings.items():
            acc = self.d_embeddings.get(row)
            if acc is None:
                self.d_embeddings[row] = vec.copy()
            else:
                acc += vec

    def scale(self, factor: float) -> None:
        self.d_w *= factor
        self.d_b *= factor
        for vec in self.d_embeddings.values():
            vec *= factor

    def global_norm(self) -> float:
        total = float(self.d_w @ self.d_w) + self.d_b * self.d_b
        for vec in self.d_embeddings.values():
            total += float(vec @ vec)
        return float(np.sqrt(total))


def hinge_loss(f_pos: float, f_neg: float) -> float:
    """Pairwise margin loss max(0, 1 - f_pos + f_neg)."""
    return max(0.0, 1.0 - f_pos + f_neg)


def _accumulate_doc(model: RankingModel, cache: ForwardCache, sign: float, grads: Gradients) -> None:
    ds = sign * (1.0 - cache.score * cache.score)
    grads.d_w += ds * cache.phi
    grads.d_b += ds
    if model.embeddings_frozen:
        return
    d_phi = ds * model.ranking.w
    matrix = cache.matrix
    n, m = matrix.shape
    if model.pooling_mode == "kernel":
        values = cache.kernel_values
        live = values >= model.clamp_floor
        d_values = np.where(live, d_phi[None, :] / np.where(live, values, 1.0), 0.0)
        sig2 = model.kernel_bank.sigmas ** 2
        force = cache.kernel_exp * (
            (model.kernel_bank.mus[None, None, :] - matrix[:, :, None]) / sig2[None, None, :]
        )
        d_matrix = (force * d_values[:, None, :]).sum(axis=2)
    elif model.pooling_mode == "mean":
        d_matrix = np.full((n, m), d_phi[0] / (n * m))
    else:
        d_matrix = np.zeros((n, m))
        d_matrix[np.arange(n), cache.argmax_cols] = d_phi[0]

    q_norms = np.where(cache.q_zero, 1.0, cache.q_norms)
    d_norms = np.where(cache.d_zero, 1.0, cache.d_norms)
    d_q = (d_matrix @ cache.d_unit - (d_matrix * matrix).sum(axis=1, keepdims=True) * cache.q_unit)
    d_q /= q_norms[:, None]
    d_q[cache.q_zero] = 0.0
    d_d = (d_matrix.T @ cache.q_unit - (d_matrix * matrix).sum(axis=0)[:, None] * cache.d_unit)
    d_d /= d_norms[:, None]
    d_d[cache.d_zero] = 0.0

    for ids, mat in ((cache.q_ids, d_q), (cache.d_ids, d_d)):
        for row, vec in zip(ids.tolist(), mat):
            acc = grads.d_embeddings.get(row)
            if acc is None:
                grads.d_embeddings[row] = vec.copy()
            else:
                acc += vec


def backward(model: RankingModel, cache_pos: ForwardCache, cache_neg: ForwardCache) -> Gradients:
    """Exact pair-loss gradients for w, b, and all touched embedding rows.

    Inactive hinge (loss <= 0) yields all-zero gradients: the kink
    sub-gradient is defined as 0.
    """
    if cache_pos.phi.shape != cache_neg.phi.shape:
        raise OptimizationError("forward caches disagree on feature count")
    grads = Gradients.zeros(model.feature_count)
    if hinge_loss(cache_pos.score, cache_neg.score) <= 0.0:
        return grads
    _accumulate_doc(model, cache_pos, -1.0, grads)
    _accumulate_doc(model, cache_neg, +1.0, grads)
    return grads


@dataclass
class AdamState:
    """First/second-moment accumulators for every trainable block."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: float
    v_b: float
    m_emb: np.ndarray | None
    v_emb: np.ndarray | None

    @classmethod
    def for_model(cls, model: RankingModel, config: TrainConfig) -> "AdamState":
        k = model.feature_count
        shape = model.embeddings.vectors.shape
        frozen = model.embeddings_frozen
        return cls(
            lr=config.lr,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            step=0,
            m_w=np.zeros(k),
            v_w=np.zeros(k),
            m_b=0.0,
            v_b=0.0,
            m_emb=None if frozen else np.zeros(shape),
            v_emb=None if frozen else np.zeros(shape),
        )


def _check_finite(name: str, value: np.ndarray | float) -> None:
    if not np.all(np.isfinite(value)):
        raise OptimizationError(f"non-finite gradient in parameter block {name}")


def _adam_apply(
    state: AdamState,
    model: RankingModel,
    d_w: np.ndarray,
    d_b: float,
    rows: np.ndarray | None,
    row_grads: np.ndarray | None,
) -> None:
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step

    state.m_w = state.beta1 * state.m_w + (1.0 - state.beta1) * d_w
    state.v_w = state.beta2 * state.v_w + (1.0 - state.beta2) * d_w ** 2
    model.ranking.w -= state.lr * (state.m_w / c1) / (np.sqrt(state.v_w / c2) + state.eps)

    state.m_b = state.beta1 * state.m_b + (1.0 - state.beta1) * d_b
    state.v_b = state.beta2 * state.v_b + (1.0 - state.beta2) * d_b ** 2
    model.ranking.b -= state.lr * (state.m_b / c1) / (np.sqrt(state.v_b / c2) + state.eps)

    if model.embeddings_frozen or rows is None or rows.size == 0:
        return
    state.m_emb[rows] = state.beta1 * state.m_emb[rows] + (1.0 - state.beta1) * row_grads
    state.v_emb[rows] = state.beta2 * state.v_emb[rows] + (1.0 - state.beta2) * row_grads ** 2
    model.embeddings.vectors[rows] -= (
        state.lr * (state.m_emb[rows] / c1) / (np.sqrt(state.v_emb[rows] / c2) + state.eps)
    )


def adam_step(state: AdamState, model: RankingModel, grads: Gradients) -> None:
    """One bias-corrected Adam update; untouched embedding rows stay put."""
    _check_finite("w", grads.d_w)
    _check_finite("b", grads.d_b)
    for row, vec in grads.d_embeddings.items():
        _check_finite(f"embeddings[{row}]", vec)
    if grads.d_embeddings:
        rows = np.array(sorted(grads.d_embeddings), dtype=np.intp)
        row_grads = np.stack([grads.d_embeddings[int(r)] for r in rows])
    else:
        rows = row_grads = None
    _adam_apply(state, model, grads.d_w, grads.d_b, rows, row_grads)


def make_pairs(
    labels: Mapping[str, Mapping[str, float]],
    log: QueryLog,
    vocab: Vocabulary,
    query_cap: int = DEFAULT_QUERY_CAP,
    title_cap: int = DEFAULT_TITLE_CAP,
    seed: int = 0,
) -> list[PreferencePair]:
    """Build one pair per (d+, d-) with label(d+) > label(d-), per query.

    Queries and documents are looked up in the log for their token
    sequences; pair order is shuffled by seed.
    """
    titles = doc_titles_by_query(log)
    queries = query_tokens_by_key(log)
    pairs: list[PreferencePair] = []
    for key in sorted(labels):
        per_doc = labels[key]
        if key not in queries or len(per_doc) < 2:
            continue
        q_seq = encode_text(vocab, queries[key], query_cap)
        known = titles.get(key, {})
        encoded = {
            doc_id: encode_text(vocab, known[doc_id], title_cap)
            for doc_id in sorted(per_doc)
            if doc_id in known
        }
        doc_ids = sorted(encoded)
        for i, a in enumerate(doc_ids):
            for b in doc_ids[i + 1:]:
                if per_doc[a] > per_doc[b]:
                    pos, neg = a, b
                elif per_doc[b] > per_doc[a]:
                    pos, neg = b, a
                else:
                    continue
                pairs.append(PreferencePair(q_seq, encoded[pos], encoded[neg], pos, neg))
    if not pairs:
        raise EmptyTrainingSetError("labels produced no preference pairs")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


# ---------------------------------------------------------------------------
# padded batch tensors for the vectorized training loop
# ---------------------------------------------------------------------------


@dataclass
class _PairTensors:
    """All pairs padded to common lengths; masks mark real positions."""

    q_ids: np.ndarray       # (P, nq) intp
    q_mask: np.ndarray      # (P, nq) float64
    pos_ids: np.ndarray     # (P, nd)
    pos_mask: np.ndarray
    neg_ids: np.ndarray
    neg_mask: np.ndarray
    qkeys: list[tuple[int, ...]]

    @classmethod
    def from_pairs(cls, pairs: Sequence[PreferencePair]) -> "_PairTensors":
        nq = max(len(p.query.ids) for p in pairs)
        nd = max(max(len(p.doc_pos.ids), len(p.doc_neg.ids)) for p in pairs)
        count = len(pairs)

        def pad(rows: list[tuple[int, ...]], width: int) -> tuple[np.ndarray, np.ndarray]:
            ids = np.zeros((count, width), dtype=np.intp)
            mask = np.zeros((count, width))
            for i, row in enumerate(rows):
                ids[i, : len(row)] = row
                mask[i, : len(row)] = 1.0
            return ids, mask

        q_ids, q_mask = pad([p.query.ids for p in pairs], nq)
        pos_ids, pos_mask = pad([p.doc_pos.ids for p in pairs], nd)
        neg_ids, neg_mask = pad([p.doc_neg.ids for p in pairs], nd)
        return cls(q_ids, q_mask, pos_ids, pos_mask, neg_ids, neg_mask,
                   [p.query.ids for p in pairs])

    def take(self, index: np.ndarray) -> "_PairTensors":
        return _PairTensors(
            self.q_ids[index], self.q_mask[index],
            self.pos_ids[index], self.pos_mask[index],
            self.neg_ids[index], self.neg_mask[index],
            [self.qkeys[i] for i in index],
        )

    def __len__(self) -> int:
        return self.q_ids.shape[0]


@dataclass
class _SideForward:
    unit: np.ndarray        # (B, n, L)
    norms: np.ndarray       # (B, n)
    zero: np.ndarray        # (B, n) bool


@dataclass
class _DocForward:
    matrix: np.ndarray            # (B, nq, nd)
    kernel_exp: np.ndarray | None
    kernel_values: np.ndarray | None
    argmax_cols: np.ndarray | None
    phi: np.ndarray               # (B, K)
    scores: np.ndarray            # (B,)


def _batch_units(model: RankingModel, ids: np.ndarray) -> _SideForward:
    vecs = model.embeddings.vectors[ids]
    norms = np.linalg.norm(vecs, axis=2)
    zero = norms < ZERO_NORM_EPS
    unit = vecs / np.where(zero, 1.0, norms)[:, :, None]
    unit[zero] = 0.0
    return _SideForward(unit, norms, zero)


def _batch_doc_forward(
    model: RankingModel,
    q: _SideForward,
    q_mask: np.ndarray,
    d: _SideForward,
    d_mask: np.ndarray,
) -> _DocForward:
    matrix = np.einsum("bnl,bml->bnm", q.unit, d.unit)
    kernel_exp = kernel_values = argmax_cols = None
    if model.pooling_mode == "kernel":
        bank = model.kernel_bank
        diff = matrix[:, :, :, None] - bank.mus[None, None, None, :]
        kernel_exp = np.exp(-(diff * diff) / (2.0 * bank.sigmas ** 2)[None, None, None, :])
        kernel_values = (kernel_exp * d_mask[:, None, :, None]).sum(axis=2)
        logs = np.log(np.maximum(kernel_values, model.clamp_floor))
        phi = (logs * q_mask[:, :, None]).sum(axis=1)
    elif model.pooling_mode == "mean":
        weights = q_mask[:, :, None] * d_mask[:, None, :]
        counts = q_mask.sum(axis=1) * d_mask.sum(axis=1)
        phi = ((matrix * weights).sum(axis=(1, 2)) / counts)[:, None]
    else:
        masked = np.where(d_mask[:, None, :] > 0, matrix, -np.inf)
        argmax_cols = masked.argmax(axis=2)
        row_max = np.take_along_axis(masked, argmax_cols[:, :, None], axis=2)[:, :, 0]
        phi = (row_max * q_mask).sum(axis=1)[:, None]
    pre = phi @ model.ranking.w + model.ranking.b
    return _DocForward(matrix, kernel_exp, kernel_values, argmax_cols, phi, np.tanh(pre))


def _batch_doc_backward(
    model: RankingModel,
    q: _SideForward,
    q_mask: np.ndarray,
    d: _SideForward,
    d_mask: np.ndarray,
    fwd: _DocForward,
    ds: np.ndarray,
    d_w: np.ndarray,
    emb_grad: np.ndarray,
    q_ids: np.ndarray,
    d_ids: np.ndarray,
) -> float:
    d_w += ds @ fwd.phi
    d_b = float(ds.sum())
    if model.embeddings_frozen:
        return d_b
    d_phi = ds[:, None] * model.ranking.w[None, :]
    matrix = fwd.matrix
    if model.pooling_mode == "kernel":
        values = fwd.kernel_values
        live = values >= model.clamp_floor
        d_values = np.where(live, d_phi[:, None, :] / np.where(live, values, 1.0), 0.0)
        d_values *= q_mask[:, :, None]
        bank = model.kernel_bank
        force = fwd.kernel_exp * (
            (bank.mus[None, None, None, :] - matrix[:, :, :, None])
            / (bank.sigmas ** 2)[None, None, None, :]
        )
        d_matrix = np.einsum("bnmk,bnk->bnm", force, d_values)
        d_matrix *= d_mask[:, None, :]
    elif model.pooling_mode == "mean":
        counts = q_mask.sum(axis=1) * d_mask.sum(axis=1)
        d_matrix = (d_phi[:, 0] / counts)[:, None, None] * (
            q_mask[:, :, None] * d_mask[:, None, :]
        )
    else:
        d_matrix = np.zeros_like(matrix)
        b_idx = np.arange(matrix.shape[0])[:, None]
        n_idx = np.arange(matrix.shape[1])[None, :]
        np.add.at(d_matrix, (b_idx, n_idx, fwd.argmax_cols), d_phi[:, :1] * q_mask)

    q_norms = np.where(q.zero, 1.0, q.norms)
    d_norms = np.where(d.zero, 1.0, d.norms)
    d_q = np.einsum("bnm,bml->bnl", d_matrix, d.unit)
    d_q -= (d_matrix * matrix).sum(axis=2)[:, :, None] * q.unit
    d_q /= q_norms[:, :, None]
    d_q[q.zero] = 0.0
    d_d = np.einsum("bnm,bnl->bml", d_matrix, q.unit)
    d_d -= (d_matrix * matrix).sum(axis=1)[:, :, None] * d.unit
    d_d /= d_norms[:, :, None]
    d_d[d.zero] = 0.0
    # padded slots carry zero gradient (masked d_matrix) but scatter anyway
    np.add.at(emb_grad, q_ids.ravel(), d_q.reshape(-1, d_q.shape[2]))
    np.add.at(emb_grad, d_ids.ravel(), d_d.reshape(-1, d_d.shape[2]))
    return d_b


def _batch_losses(model: RankingModel, batch: _PairTensors) -> np.ndarray:
    q = _batch_units(model, batch.q_ids)
    pos = _batch_units(model, batch.pos_ids)
    neg = _batch_units(model, batch.neg_ids)
    f_pos = _batch_doc_forward(model, q, batch.q_mask, pos, batch.pos_mask).scores
    f_neg = _batch_doc_forward(model, q, batch.q_mask, neg, batch.neg_mask).scores
    return np.maximum(0.0, 1.0 - f_pos + f_neg)


def _batch_step(
    model: RankingModel,
    state: AdamState,
    batch: _PairTensors,
    emb_grad: np.ndarray,
    config: TrainConfig,
) -> float:
    """Forward, backward, and one Adam update over a padded batch."""
    q = _batch_units(model, batch.q_ids)
    pos = _batch_units(model, batch.pos_ids)
    neg = _batch_units(model, batch.neg_ids)
    fwd_pos = _batch_doc_forward(model, q, batch.q_mask, pos, batch.pos_mask)
    fwd_neg = _batch_doc_forward(model, q, batch.q_mask, neg, batch.neg_mask)
    losses = np.maximum(0.0, 1.0 - fwd_pos.scores + fwd_neg.scores)
    loss_sum = float(losses.sum())
    active = losses > 0.0
    n_active = int(active.sum())
    if n_active == 0:
        return loss_sum

    if not model.embeddings_frozen:
        # touched = real (unpadded) token rows of pairs with an active hinge
        touched = np.unique(np.concatenate([
            batch.q_ids[active][batch.q_mask[active] > 0],
            batch.pos_ids[active][batch.pos_mask[active] > 0],
            batch.neg_ids[active][batch.neg_mask[active] > 0],
        ]))
        emb_grad[touched] = 0.0
    d_w = np.zeros(model.feature_count)
    ds_pos = np.where(active, -(1.0 - fwd_pos.scores ** 2), 0.0)
    ds_neg = np.where(active, +(1.0 - fwd_neg.scores ** 2), 0.0)
    d_b = _batch_doc_backward(
        model, q, batch.q_mask, pos, batch.pos_mask, fwd_pos, ds_pos,
        d_w, emb_grad, batch.q_ids, batch.pos_ids,
    )
    d_b += _batch_doc_backward(
        model, q, batch.q_mask, neg, batch.neg_mask, fwd_neg, ds_neg,
        d_w, emb_grad, batch.q_ids, batch.neg_ids,
    )

    scale = 1.0 / n_active
    d_w *= scale
    d_b *= scale
    rows = row_grads = None
    if not model.embeddings_frozen:
        rows = touched
        row_grads = emb_grad[touched] * scale
    if config.grad_clip is not None:
        total = float(d_w @ d_w) + d_b * d_b
        if row_grads is not None and row_grads.size:
            total += float((row_grads * row_grads).sum())
        norm = float(np.sqrt(total))
        if norm > config.grad_clip:
            clip = config.grad_clip / norm
            d_w *= clip
            d_b *= clip
            if row_grads is not None:
                row_grads *= clip
    _check_finite("w", d_w)
    _check_finite("b", d_b)
    if row_grads is not None and row_grads.size:
        _check_finite("embeddings", row_grads)
    _adam_apply(state, model, d_w, d_b, rows, row_grads)
    return loss_sum


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    elapsed_ms: float


@dataclass
class TrainResult:
    model: RankingModel
    epochs: list[EpochStats]
    selected_epoch: int
    diverged: bool = False


def _snapshot(model: RankingModel) -> tuple[np.ndarray, float, np.ndarray]:
    return (
        model.ranking.w.copy(),
        model.ranking.b,
        model.embeddings.vectors.copy(),
    )


def _restore(model: RankingModel, snap: tuple[np.ndarray, float, np.ndarray]) -> None:
    model.ranking.w = snap[0].copy()
    model.ranking.b = snap[1]
    model.embeddings.vectors = snap[2].copy()


def train(model: RankingModel, pairs: Sequence[PreferencePair], config: TrainConfig) -> TrainResult:
    """Train in shuffled batches with early stopping on validation pair loss.

    Validation holds out a fraction of training queries (split by query,
    not by pair). Returns the best-validation snapshot; a non-finite loss
    aborts training and returns the last good snapshot.
    """
    if not pairs:
        raise EmptyTrainingSetError("no training pairs")
    tensors = _PairTensors.from_pairs(list(pairs))

    keys = sorted(set(tensors.qkeys))
    val_keys: set[tuple[int, ...]] = set()
    if len(keys) >= 2:
        split_rng = np.random.default_rng([config.seed, 0])
        order = split_rng.permutation(len(keys))
        n_val = min(max(1, round(len(keys) * config.validation_fraction)), len(keys) - 1)
        val_keys = {keys[i] for i in order[:n_val]}
    in_val = np.array([k in val_keys for k in tensors.qkeys])
    train_tensors = tensors.take(np.flatnonzero(~in_val))
    val_tensors = tensors.take(np.flatnonzero(in_val)) if in_val.any() else None

    state = AdamState.for_model(model, config)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    emb_grad = np.zeros_like(model.embeddings.vectors)
    best = _snapshot(model)
    best_val = float("inf")
    best_epoch = 0
    bad_epochs = 0
    stats: list[EpochStats] = []
    diverged = False

    for epoch in range(config.max_epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(train_tensors))
        loss_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = train_tensors.take(order[start:start + config.batch_size])
            try:
                loss_sum += _batch_step(model, state, batch, emb_grad, config)
            except OptimizationError:
                diverged = True
                break
            if not np.isfinite(loss_sum):
                diverged = True
                break
        if diverged:
            break

        train_loss = loss_sum / max(1, len(train_tensors))
        if val_tensors is not None:
            val_loss = float(_batch_losses(model, val_tensors).mean())
        else:
            val_loss = train_loss
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        stats.append(EpochStats(epoch, train_loss, val_loss, elapsed_ms))
        if not np.isfinite(val_loss):
            diverged = True
            break

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best = _snapshot(model)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience_epochs:
                break

    _restore(model, best)
    return TrainResult(model, stats, best_epoch, diverged)


def render_training_report(result: TrainResult, header_lines: Sequence[str] = ()) -> str:
    """TSV per-epoch report plus a final line naming the selected epoch."""
    lines = [f"# {h}" for h in header_lines]
    lines.append("epoch\tmean_train_loss\tmean_val_loss\telapsed_ms")
    for s in result.epochs:
        lines.append(f"{s.epoch}\t{s.train_loss!r}\t{s.val_loss!r}\t{s.elapsed_ms:.1f}")
    lines.append(f"selected_epoch\t{result.selected_epoch}")
    if result.diverged:
        lines.append("# training aborted on non-finite loss; last good snapshot returned")
    return "\n".join(lines) + "\n"
