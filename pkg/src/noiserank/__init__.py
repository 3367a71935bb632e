"""noiserank: a desk-scale two-stage document-ranking workbench.

BM25 first-stage retrieval over an inverted index, a trainable cross-encoder
reranker with head/middle/tail passage windows, rank-interval bag sampling of
training groups, a combined per-document and group-wise contrastive loss with
exact hand-derived gradients, MRR evaluation, and a built-in label-noise
robustness experiment on synthetic corpora with hidden unlabeled positives.
"""

__version__ = "0.1.0"

from .corpus import (
    Document,
    DocumentStore,
    HiddenTruth,
    Qrels,
    Query,
    QuerySet,
    SynthConfig,
    generate_synthetic,
    load_documents,
    load_qrels,
    load_queries,
)
from .evaluation import MetricReport, RunFile, mrr_at_k, read_run, rerank, write_run
from .loss import LossBreakdown, batch_loss, finite_difference_check, lce_loss
from .model import (
    ModelConfig,
    ScorerParams,
    encode_pair,
    group_encode,
    group_score,
    init_params,
    load_checkpoint,
    save_checkpoint,
    score_document,
    score_from_repr,
)
from .passages import PassageSet, split_passages
from .retrieval import (
    CandidateList,
    InvertedIndex,
    bm25_score,
    build_index,
    retrieve,
    tokenize,
)
from .sampling import BagPartition, Group, TrainingBatch, build_bags, build_batch, build_batch_random, sample_group
from .training import AdamState, TrainConfig, adam_step, train

__all__ = [
    "AdamState",
    "BagPartition",
    "CandidateList",
    "Document",
    "DocumentStore",
    "Group",
    "HiddenTruth",
    "InvertedIndex",
    "LossBreakdown",
    "MetricReport",
    "ModelConfig",
    "PassageSet",
    "Qrels",
    "Query",
    "QuerySet",
    "RunFile",
    "ScorerParams",
    "SynthConfig",
    "TrainConfig",
    "TrainingBatch",
    "adam_step",
    "batch_loss",
    "bm25_score",
    "build_bags",
    "build_batch",
    "build_batch_random",
    "build_index",
    "encode_pair",
    "finite_difference_check",
    "generate_synthetic",
    "group_encode",
    "group_score",
    "init_params",
    "lce_loss",
    "load_checkpoint",
    "load_documents",
    "load_qrels",
    "load_queries",
    "mrr_at_k",
    "read_run",
    "rerank",
    "retrieve",
    "sample_group",
    "save_checkpoint",
    "score_document",
    "score_from_repr",
    "split_passages",
    "tokenize",
    "train",
    "write_run",
]
