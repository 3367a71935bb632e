"""Contrastive training objective and its exact gradients.

Two losses are combined: a softmax cross-entropy over the positive group's
member document scores (the positive contrasted against same-group negatives)
and the same loss over per-group scores (the positive-bearing group contrasted
against the other bags' groups), weighted by lambda_group. Gradients are
hand-derived reverse-mode and verified against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .model import (
    CorpusEncoder,
    Pool,
    ScorerParams,
    group_conv,
    pooled_embedding,
)
from .sampling import TrainingBatch

if TYPE_CHECKING:
    from .corpus import Query

_PARAM_FIELDS = (
    "embedding_table",
    "ffn_weight",
    "ffn_bias",
    "projection_v",
    "conv_filters",
    "conv_bias",
    "group_projection_u",
)


@dataclass
class GradientSet:
    embedding_table: np.ndarray
    ffn_weight: np.ndarray
    ffn_bias: np.ndarray
    projection_v: np.ndarray
    conv_filters: np.ndarray
    conv_bias: np.ndarray
    group_projection_u: np.ndarray

    @classmethod
    def zeros_like(cls, params: ScorerParams) -> "GradientSet":
        return cls(**{name: np.zeros_like(arr) for name, arr in params.tensors().items()})

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_FIELDS}


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    lce_individual: float
    lce_group: float
    lambda_group: float


def lce_loss(scores: Sequence[float] | np.ndarray, positive_index: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy of the positive against all scores in the list.

    Returns (loss, dloss/dscores); the gradient is softmax(scores) minus the
    one-hot positive, so its components always sum to zero.
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"need at least 2 scores, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("scores contain non-finite values")
    if not 0 <= positive_index < arr.size:
        raise ValueError(f"positive_index {positive_index} out of range for {arr.size} scores")
    shift = arr.max()
    exp = np.exp(arr - shift)
    z = exp.sum()
    loss = float(np.log(z) + shift - arr[positive_index])
    grad = exp / z
    grad[positive_index] -= 1.0
    return loss, grad


@dataclass(frozen=True)
class MemberInputs:
    doc_id: str
    passage_pools: list[Pool]


@dataclass(frozen=True)
class GroupInputs:
    members: list[MemberInputs]


@dataclass(frozen=True)
class BatchInputs:
    query_id: str
    query: Pool
    groups: list[GroupInputs]
    positive_group: int


def materialize_batch(
    batch: TrainingBatch, query: "Query", encoder: CorpusEncoder
) -> BatchInputs:
    """Resolve a batch's documents into pooled token statistics (params-independent)."""
    positive_group = batch.positive_group
    if batch.groups[positive_group].positive_index != 0:
        raise ValueError("the positive must sit at index 0 of its group")
    groups = [
        GroupInputs(
            members=[
                MemberInputs(doc_id=doc_id, passage_pools=encoder.passage_pools(doc_id))
                for doc_id in group.member_doc_ids
            ]
        )
        for group in batch.groups
    ]
    return BatchInputs(
        query_id=batch.query_id,
        query=encoder.query_pool(query),
        groups=groups,
        positive_group=positive_group,
    )


@dataclass
class _PairCache:
    m: np.ndarray
    r: np.ndarray
    score: float


@dataclass
class _MemberCache:
    pairs: list[_PairCache]
    argmax: int
    doc_score: float


@dataclass
class _GroupCache:
    members: list[_MemberCache]
    rep_matrix: np.ndarray  # hidden_dim x group_size
    pstar: np.ndarray  # argmax conv position per filter
    feature: np.ndarray
    score: float


@dataclass
class _BatchCache:
    groups: list[_GroupCache]
    member_grad: np.ndarray  # dloss/d(member doc scores) of the positive group
    group_grad: np.ndarray  # dloss/d(group scores), lambda-scaled


def _forward(
    params: ScorerParams, inputs: BatchInputs, lambda_group: float
) -> tuple[LossBreakdown, _BatchCache]:
    weight = params.ffn_weight
    bias = params.ffn_bias
    proj = params.projection_v
    group_caches: list[_GroupCache] = []
    for group in inputs.groups:
        member_caches: list[_MemberCache] = []
        for member in group.members:
            pairs: list[_PairCache] = []
            for pool in member.passage_pools:
                m = pooled_embedding(params, inputs.query, pool)
                r = np.tanh(m @ weight + bias)
                pairs.append(_PairCache(m=m, r=r, score=float(proj @ r)))
            scores = np.array([p.score for p in pairs])
            if not np.isfinite(scores).all():
                raise ValueError(
                    f"non-finite passage score for document {member.doc_id!r}"
                )
            argmax = int(scores.argmax())
            member_caches.append(
                _MemberCache(pairs=pairs, argmax=argmax, doc_score=float(scores[argmax]))
            )
        rep_matrix = np.stack([mc.pairs[mc.argmax].r for mc in member_caches], axis=1)
        conv_out = group_conv(params, rep_matrix)
        pstar = conv_out.argmax(axis=1)
        feature = conv_out[np.arange(conv_out.shape[0]), pstar]
        score = float(params.group_projection_u @ feature)
        if not np.isfinite(score):
            raise ValueError("non-finite group score")
        group_caches.append(
            _GroupCache(
                members=member_caches,
                rep_matrix=rep_matrix,
                pstar=pstar,
                feature=feature,
                score=score,
            )
        )

    positive_members = group_caches[inputs.positive_group].members
    member_scores = np.array([mc.doc_score for mc in positive_members])
    lce_individual, member_grad = lce_loss(member_scores, 0)

    group_scores = np.array([gc.score for gc in group_caches])
    if len(group_caches) >= 2:
        lce_group, raw_group_grad = lce_loss(group_scores, inputs.positive_group)
    else:
        lce_group, raw_group_grad = 0.0, np.zeros(1)

    total = lce_individual + lambda_group * lce_group
    if not np.isfinite(total):
        raise ValueError("non-finite total loss")
    breakdown = LossBreakdown(
        total=total,
        lce_individual=lce_individual,
        lce_group=lce_group,
        lambda_group=lambda_group,
    )
    cache = _BatchCache(
        groups=group_caches,
        member_grad=member_grad,
        group_grad=lambda_group * raw_group_grad,
    )
    return breakdown, cache


def _backward(
    params: ScorerParams, inputs: BatchInputs, cache: _BatchCache
) -> GradientSet:
    grads = GradientSet.zeros_like(params)
    weight = params.ffn_weight
    proj = params.projection_v
    conv = params.conv_filters
    width = conv.shape[2]
    query = inputs.query

    for g, (group_in, group_cache) in enumerate(zip(inputs.groups, cache.groups)):
        size = len(group_in.members)
        d_rep = np.zeros((weight.shape[1], size))

        dg = cache.group_grad[g] if g < cache.group_grad.size else 0.0
        if dg != 0.0:
            grads.group_projection_u += dg * group_cache.feature
            d_feature = dg * params.group_projection_u
            for f in range(conv.shape[0]):
                df = d_feature[f]
                if df == 0.0:
                    continue
                p = int(group_cache.pstar[f])
                grads.conv_filters[f] += df * group_cache.rep_matrix[:, p : p + width]
                grads.conv_bias[f] += df
                d_rep[:, p : p + width] += df * conv[f]

        if g == inputs.positive_group:
            for i, mc in enumerate(group_cache.members):
                ds = cache.member_grad[i]
                r = mc.pairs[mc.argmax].r
                grads.projection_v += ds * r
                d_rep[:, i] += ds * proj

        for i, (member_in, mc) in enumerate(zip(group_in.members, group_cache.members)):
            dr = d_rep[:, i]
            if not dr.any():
                continue
            pair = mc.pairs[mc.argmax]
            dz = dr * (1.0 - pair.r * pair.r)
            grads.ffn_weight += np.outer(pair.m, dz)
            grads.ffn_bias += dz
            dm = weight @ dz
            pool = member_in.passage_pools[mc.argmax]
            scale = 1.0 / (query.total + 1 + pool.total)
            dm_scaled = dm * scale
            grads.embedding_table[params.sep_id] += dm_scaled
            if query.total:
                grads.embedding_table[query.uniq] += np.outer(query.counts, dm_scaled)
            if pool.total:
                grads.embedding_table[pool.uniq] += np.outer(pool.counts, dm_scaled)
    return grads


def batch_loss(
    params: ScorerParams,
    batch: TrainingBatch,
    query: "Query",
    encoder: CorpusEncoder,
    lambda_group: float,
) -> tuple[LossBreakdown, GradientSet]:
    """Loss breakdown and exact gradients for one query's batch of groups."""
    inputs = materialize_batch(batch, query, encoder)
    breakdown, cache = _forward(params, inputs, lambda_group)
    grads = _backward(params, inputs, cache)
    for name, arr in grads.tensors().items():
        if not np.isfinite(arr).all():
            raise ValueError(f"non-finite gradient in {name}")
    return breakdown, grads


def batch_loss_from_inputs(
    params: ScorerParams, inputs: BatchInputs, lambda_group: float
) -> tuple[LossBreakdown, GradientSet]:
    breakdown, cache = _forward(params, inputs, lambda_group)
    return breakdown, _backward(params, inputs, cache)


@dataclass
class _FlatBatch:
    """Pair weights stacked into one dense matrix for a fast total-only forward.

    Row layout is group-major, member-major, passage-minor (4 rows per member).
    Used by the finite-difference sweep, where the forward runs tens of
    thousands of times; it is an independent second implementation of the
    same function, so it doubles as a cross-check of the training forward.
    """

    pair_weights: np.ndarray  # (num_pairs, vocab_size)
    group_sizes: list[int]
    positive_group: int
    lambda_group: float


def _flatten_batch(
    inputs: BatchInputs, vocab_size: int, sep_id: int, lambda_group: float
) -> _FlatBatch:
    members = [m for g in inputs.groups for m in g.members]
    weights = np.zeros((4 * len(members), vocab_size))
    row = 0
    query = inputs.query
    for member in members:
        for pool in member.passage_pools:
            scale = 1.0 / (query.total + 1 + pool.total)
            weights[row, sep_id] += scale
            if query.total:
                weights[row, query.uniq] += query.counts * scale
            if pool.total:
                weights[row, pool.uniq] += pool.counts * scale
            row += 1
    return _FlatBatch(
        pair_weights=weights,
        group_sizes=[len(g.members) for g in inputs.groups],
        positive_group=inputs.positive_group,
        lambda_group=lambda_group,
    )


def _lse_minus(scores: np.ndarray, positive_index: int):
    """logsumexp(scores) - scores[positive_index], dtype-preserving."""
    shift = scores.max()
    return np.log(np.exp(scores - shift).sum()) + shift - scores[positive_index]


def _flat_total(flat: _FlatBatch, pair_weights: np.ndarray, tensors: dict[str, np.ndarray]):
    """Total loss from stacked pair weights; works in any float dtype."""
    pooled = pair_weights @ tensors["embedding_table"]
    reps = np.tanh(pooled @ tensors["ffn_weight"] + tensors["ffn_bias"])
    scores = reps @ tensors["projection_v"]
    per_member = scores.reshape(-1, 4)
    argmax = per_member.argmax(axis=1)
    doc_scores = per_member[np.arange(len(per_member)), argmax]
    member_reps = reps.reshape(len(per_member), 4, -1)[np.arange(len(per_member)), argmax]

    conv = tensors["conv_filters"]
    width = conv.shape[2]
    group_scores = np.empty(len(flat.group_sizes), dtype=pair_weights.dtype)
    offset = 0
    for g, size in enumerate(flat.group_sizes):
        rep_matrix = member_reps[offset : offset + size].T
        positions = size - width + 1
        conv_out = np.empty((conv.shape[0], positions), dtype=pair_weights.dtype)
        for p in range(positions):
            conv_out[:, p] = np.tensordot(
                conv, rep_matrix[:, p : p + width], axes=([1, 2], [0, 1])
            )
        feature = (conv_out + tensors["conv_bias"][:, None]).max(axis=1)
        group_scores[g] = tensors["group_projection_u"] @ feature
        offset += size

    pos_start = sum(flat.group_sizes[: flat.positive_group])
    pos_size = flat.group_sizes[flat.positive_group]
    total = _lse_minus(doc_scores[pos_start : pos_start + pos_size], 0)
    if len(flat.group_sizes) >= 2:
        total = total + flat.lambda_group * _lse_minus(group_scores, flat.positive_group)
    return total


# Double-precision difference quotients lose to rounding noise once the true
# gradient drops below ~1e-6; probes reporting above this go to a second pass
# in extended precision, where the noise floor sits ~3 decades lower.
_PROMOTE_THRESHOLD = 1e-5


def finite_difference_check(
    params: ScorerParams,
    batch: TrainingBatch,
    query: "Query",
    encoder: CorpusEncoder,
    lambda_group: float,
    epsilon: float,
    analytic: GradientSet | None = None,
) -> float:
    """Worst relative error between analytic gradients and central differences.

    Every scalar parameter is perturbed by +/- epsilon; the relative error
    denominator is max(|analytic|, |numeric|, 1e-8). Parameters are restored
    exactly after each probe. Probes whose double-precision quotient is
    dominated by rounding noise are re-evaluated in extended precision.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    inputs = materialize_batch(batch, query, encoder)
    if analytic is None:
        breakdown, cache = _forward(params, inputs, lambda_group)
        analytic = _backward(params, inputs, cache)
    flat = _flatten_batch(
        inputs, params.embedding_table.shape[0], params.sep_id, lambda_group
    )
    weights = flat.pair_weights

    worst = 0.0
    inconclusive: list[tuple[str, tuple[int, ...], float]] = []
    tensors = params.tensors()
    for name, arr in tensors.items():
        grad = getattr(analytic, name)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            loss_plus = _flat_total(flat, weights, tensors)
            arr[idx] = orig - epsilon
            loss_minus = _flat_total(flat, weights, tensors)
            arr[idx] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            a = float(grad[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > _PROMOTE_THRESHOLD:
                inconclusive.append((name, idx, a))
            elif rel > worst:
                worst = rel

    if inconclusive:
        eps_ext = np.longdouble(epsilon)
        weights_ext = weights.astype(np.longdouble)
        tensors_ext = {n: t.astype(np.longdouble) for n, t in tensors.items()}
        for name, idx, a in inconclusive:
            arr = tensors_ext[name]
            orig = arr[idx]
            arr[idx] = orig + eps_ext
            loss_plus = _flat_total(flat, weights_ext, tensors_ext)
            arr[idx] = orig - eps_ext
            loss_minus = _flat_total(flat, weights_ext, tensors_ext)
            arr[idx] = orig
            numeric = float((loss_plus - loss_minus) / (2.0 * eps_ext))
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
    return worst
