"""Trainable relevance scorer: embedding mean-pool pair encoder, scalar projection,
max aggregation over passage windows, and the conv + max-pool group encoder.

Model token ids extend the index vocabulary with two specials appended at the
end: SEP (id = vocab_size - 2) joins query and passage, UNK (id = vocab_size - 1)
absorbs out-of-vocabulary query terms.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .passages import PassageSet, split_passages
from .retrieval import Vocabulary, doc_tokens

if TYPE_CHECKING:
    from .corpus import DocumentStore, Query

_CHECKPOINT_MAGIC = b"NRCKPT01"
_PARAM_FIELDS = (
    "embedding_table",
    "ffn_weight",
    "ffn_bias",
    "projection_v",
    "conv_filters",
    "conv_bias",
    "group_projection_u",
)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    emb_dim: int = 64
    hidden_dim: int = 64
    num_filters: int = 32
    filter_width: int = 2

    def __post_init__(self) -> None:
        for name in ("vocab_size", "emb_dim", "hidden_dim", "num_filters", "filter_width"):
            value = getattr(self, name)
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.vocab_size < 3:
            raise ValueError("vocab_size must cover at least one term plus SEP and UNK")


@dataclass
class ScorerParams:
    embedding_table: np.ndarray  # (vocab_size, emb_dim)
    ffn_weight: np.ndarray  # (emb_dim, hidden_dim)
    ffn_bias: np.ndarray  # (hidden_dim,)
    projection_v: np.ndarray  # (hidden_dim,)
    conv_filters: np.ndarray  # (num_filters, hidden_dim, filter_width)
    conv_bias: np.ndarray  # (num_filters,)
    group_projection_u: np.ndarray  # (num_filters,)

    @property
    def config(self) -> ModelConfig:
        return ModelConfig(
            vocab_size=self.embedding_table.shape[0],
            emb_dim=self.embedding_table.shape[1],
            hidden_dim=self.ffn_weight.shape[1],
            num_filters=self.conv_filters.shape[0],
            filter_width=self.conv_filters.shape[2],
        )

    @property
    def sep_id(self) -> int:
        return self.embedding_table.shape[0] - 2

    @property
    def unk_id(self) -> int:
        return self.embedding_table.shape[0] - 1

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_FIELDS}

    def copy(self) -> "ScorerParams":
        return ScorerParams(**{name: arr.copy() for name, arr in self.tensors().items()})


def init_params(cfg: ModelConfig, seed: int) -> ScorerParams:
    """Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] weights, zero biases, seeded."""
    rng = np.random.default_rng(seed)

    def uniform(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return ScorerParams(
        embedding_table=uniform((cfg.vocab_size, cfg.emb_dim), cfg.emb_dim),
        ffn_weight=uniform((cfg.emb_dim, cfg.hidden_dim), cfg.emb_dim),
        ffn_bias=np.zeros(cfg.hidden_dim),
        projection_v=uniform((cfg.hidden_dim,), cfg.hidden_dim),
        conv_filters=uniform(
            (cfg.num_filters, cfg.hidden_dim, cfg.filter_width),
            cfg.hidden_dim * cfg.filter_width,
        ),
        conv_bias=np.zeros(cfg.num_filters),
        group_projection_u=uniform((cfg.num_filters,), cfg.num_filters),
    )


@dataclass(frozen=True)
class Pool:
    """Unique token ids with their counts; the mean-pool sufficient statistics."""

    uniq: np.ndarray
    counts: np.ndarray
    total: int


def pool_tokens(token_ids: Sequence[int] | np.ndarray) -> Pool:
    ids = np.asarray(token_ids, dtype=np.int64)
    uniq, counts = np.unique(ids, return_counts=True)
    return Pool(uniq=uniq, counts=counts.astype(np.float64), total=int(ids.size))


def pooled_embedding(params: ScorerParams, query: Pool, passage: Pool) -> np.ndarray:
    """Mean of the embeddings of [query ++ SEP ++ passage]."""
    total = query.total + 1 + passage.total
    vec = params.embedding_table[params.sep_id].copy()
    if query.total:
        vec += params.embedding_table[query.uniq].T @ query.counts
    if passage.total:
        vec += params.embedding_table[passage.uniq].T @ passage.counts
    return vec / total


def pair_representation(params: ScorerParams, query: Pool, passage: Pool) -> np.ndarray:
    m = pooled_embedding(params, query, passage)
    return np.tanh(m @ params.ffn_weight + params.ffn_bias)


def encode_pair(
    params: ScorerParams,
    query_tokens: Sequence[int] | np.ndarray,
    passage_tokens: Sequence[int] | np.ndarray,
) -> np.ndarray:
    """Pooled pair representation; order-invariant in both token sequences."""
    query = pool_tokens(query_tokens)
    passage = pool_tokens(passage_tokens)
    if query.total == 0 and passage.total == 0:
        raise ValueError("cannot encode a pair with both sequences empty")
    return pair_representation(params, query, passage)


def score_from_repr(params: ScorerParams, representation: np.ndarray) -> float:
    return float(params.projection_v @ representation)


@dataclass(frozen=True)
class DocumentScore:
    doc_score: float
    passage_scores: np.ndarray  # (4,) in head, middle_1, middle_2, tail order
    argmax_passage: int


def score_document_pools(
    params: ScorerParams, query: Pool, passage_pools: Sequence[Pool]
) -> DocumentScore:
    scores = np.array(
        [score_from_repr(params, pair_representation(params, query, p)) for p in passage_pools]
    )
    argmax = int(scores.argmax())  # first max wins: head < middle_1 < middle_2 < tail
    return DocumentScore(doc_score=float(scores[argmax]), passage_scores=scores, argmax_passage=argmax)


def score_document(
    params: ScorerParams,
    query_tokens: Sequence[int] | np.ndarray,
    pset: PassageSet,
) -> DocumentScore:
    """Score all four passages of a document; the document score is their max."""
    query = pool_tokens(query_tokens)
    pools = [pool_tokens(p) for p in pset.passages()]
    return score_document_pools(params, query, pools)


def group_conv(params: ScorerParams, rep_matrix: np.ndarray) -> np.ndarray:
    """Stride-1, no-padding convolution over the member axis.

    rep_matrix is hidden_dim x s; output is num_filters x (s - filter_width + 1).
    """
    width = params.conv_filters.shape[2]
    positions = rep_matrix.shape[1] - width + 1
    if positions < 1:
        raise ValueError(
            f"group of size {rep_matrix.shape[1]} is smaller than filter width {width}"
        )
    out = np.empty((params.conv_filters.shape[0], positions))
    for p in range(positions):
        out[:, p] = np.tensordot(
            params.conv_filters, rep_matrix[:, p : p + width], axes=([1, 2], [0, 1])
        )
    return out + params.conv_bias[:, None]


def group_encode(params: ScorerParams, reps: Sequence[np.ndarray]) -> np.ndarray:
    """Max over conv positions per filter, for a group of member representations."""
    if len(reps) < params.conv_filters.shape[2]:
        raise ValueError(
            f"group of size {len(reps)} is smaller than filter width {params.conv_filters.shape[2]}"
        )
    rep_matrix = np.stack(reps, axis=1)
    return group_conv(params, rep_matrix).max(axis=1)


def group_score(params: ScorerParams, group_feature: np.ndarray) -> float:
    return float(params.group_projection_u @ group_feature)


class CorpusEncoder:
    """Maps corpus text to model token ids and caches passage pools per document.

    Passage windows are drawn with the given seed, so one encoder instance
    pins one epoch's (or inference's frozen) passage layout.
    """

    def __init__(
        self,
        store: "DocumentStore",
        vocabulary: Vocabulary,
        max_passage_len: int,
        passage_seed: int,
    ) -> None:
        self.store = store
        self.vocabulary = vocabulary
        self.max_passage_len = max_passage_len
        self.passage_seed = passage_seed
        self.sep_id = len(vocabulary)
        self.unk_id = len(vocabulary) + 1
        self.model_vocab_size = len(vocabulary) + 2
        self._doc_ids: dict[str, np.ndarray] = {}
        self._passage_sets: dict[str, PassageSet] = {}
        self._passage_pools: dict[str, list[Pool]] = {}
        self._query_pools: dict[str, Pool] = {}
        self._query_ids: dict[str, np.ndarray] = {}

    def query_token_ids(self, query: "Query") -> np.ndarray:
        cached = self._query_ids.get(query.query_id)
        if cached is None:
            from .retrieval import tokenize

            ids = [self.vocabulary.id_of(t) for t in tokenize(query.text)]
            cached = np.array(
                [self.unk_id if i is None else i for i in ids], dtype=np.int64
            )
            self._query_ids[query.query_id] = cached
        return cached

    def query_pool(self, query: "Query") -> Pool:
        cached = self._query_pools.get(query.query_id)
        if cached is None:
            cached = pool_tokens(self.query_token_ids(query))
            self._query_pools[query.query_id] = cached
        return cached

    def doc_token_ids(self, doc_id: str) -> np.ndarray:
        cached = self._doc_ids.get(doc_id)
        if cached is None:
            doc = self.store[doc_id]
            ids = [self.vocabulary.id_of(t) for t in doc_tokens(doc)]
            cached = np.array(
                [self.unk_id if i is None else i for i in ids], dtype=np.int64
            )
            self._doc_ids[doc_id] = cached
        return cached

    def passage_set(self, doc_id: str) -> PassageSet:
        cached = self._passage_sets.get(doc_id)
        if cached is None:
            cached = split_passages(
                self.doc_token_ids(doc_id), self.max_passage_len, self.passage_seed, doc_id
            )
            self._passage_sets[doc_id] = cached
        return cached

    def passage_pools(self, doc_id: str) -> list[Pool]:
        cached = self._passage_pools.get(doc_id)
        if cached is None:
            cached = [pool_tokens(p) for p in self.passage_set(doc_id).passages()]
            self._passage_pools[doc_id] = cached
        return cached


def save_checkpoint(params: ScorerParams, path: str | Path) -> None:
    """Write magic, dimensions, then tensors as little-endian float64 (see README)."""
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<5I", cfg.vocab_size, cfg.emb_dim, cfg.hidden_dim, cfg.num_filters, cfg.filter_width
            )
        )
        for arr in params.tensors().values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> ScorerParams:
    raw = Path(path).read_bytes()
    if raw[: len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a noiserank checkpoint")
    header_end = len(_CHECKPOINT_MAGIC) + struct.calcsize("<5I")
    vocab, emb, hidden, filters, width = struct.unpack(
        "<5I", raw[len(_CHECKPOINT_MAGIC) : header_end]
    )
    shapes = {
        "embedding_table": (vocab, emb),
        "ffn_weight": (emb, hidden),
        "ffn_bias": (hidden,),
        "projection_v": (hidden,),
        "conv_filters": (filters, hidden, width),
        "conv_bias": (filters,),
        "group_projection_u": (filters,),
    }
    offset = header_end
    arrays: dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(raw):
            raise ValueError(f"{path}: truncated checkpoint while reading {name}")
        arrays[name] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes after tensors")
    params = ScorerParams(**arrays)
    for name, arr in params.tensors().items():
        if not np.isfinite(arr).all():
            raise ValueError(f"{path}: non-finite values in {name}")
    return params
