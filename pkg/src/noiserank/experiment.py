"""End-to-end noise-robustness experiment: synthetic corpus, BM25 candidates,
bag-sampled vs uniform-negative training across seeds, dev MRR comparison."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SynthConfig, generate_synthetic, write_corpus
from .evaluation import candidates_to_run, mrr_at_k, rerank, write_run
from .loss import finite_difference_check
from .model import CorpusEncoder, ModelConfig, init_params
from .report import plot_experiment, plot_history
from .retrieval import build_index, retrieve_all
from .sampling import build_batch
from .training import EpochRecord, TrainConfig, train, write_history

log = logging.getLogger("noiserank.experiment")

# Small two-query corpus for gradient verification: every document splits into
# real head/middle/tail windows and every bag structure is exercised.
GRAD_CHECK_CORPUS = SynthConfig(
    num_queries=2,
    docs_per_query_topic=8,
    vocab_size=72,
    doc_len_min=36,
    doc_len_max=48,
    relevant_per_query=3,
    query_len=4,
    topic_terms=6,
    max_passage_len=8,
)


def gradient_check_toy(
    seed: int, epsilon: float = 1e-5, lambda_group: float = 1.0
) -> float:
    """Finite-difference check on a 2-query toy corpus with default model dims.

    Returns the worst relative error over both queries' batches.
    """
    store, queries, qrels, _ = generate_synthetic(GRAD_CHECK_CORPUS, seed)
    index = build_index(store)
    candidates = retrieve_all(index, queries, k=GRAD_CHECK_CORPUS.docs_per_query_topic)
    model_cfg = ModelConfig(vocab_size=len(index.vocabulary) + 2)
    params = init_params(model_cfg, seed)
    encoder = CorpusEncoder(
        store, index.vocabulary, GRAD_CHECK_CORPUS.max_passage_len, passage_seed=seed
    )
    worst = 0.0
    for qid in queries.query_ids():
        batch = build_batch(candidates[qid], qrels, num_bags=3, group_size=3, rng=seed)
        if batch is None:
            raise ValueError(f"toy corpus query {qid!r} produced no batch")
        err = finite_difference_check(
            params, batch, queries[qid], encoder, lambda_group, epsilon
        )
        worst = max(worst, err)
    return worst


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: int = 5
    seed: int = 0
    dev_fraction: float = 0.2
    epochs: int = 12
    learning_rate: float = 1e-3
    m_bags: int = 6
    group_size: int = 4
    top_k: int = 100
    lambda_group: float = 1.0
    threads: int = 1
    corpus: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if not 0.0 < self.dev_fraction < 1.0:
            raise ValueError("dev_fraction must lie in (0, 1)")
        self.corpus.validate()


@dataclass
class ExperimentResult:
    rows: list[tuple[str, int, float]]  # (sampler, seed, dev_mrr)
    bm25_dev_mrr: float
    mean_by_sampler: dict[str, float]
    dev_query_ids: list[str]
    out_dir: Path


def split_dev(query_ids: list[str], dev_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Deterministic held-out split of query ids: (train, dev)."""
    rng = np.random.default_rng([seed, 17])
    order = rng.permutation(len(query_ids))
    n_dev = max(1, int(round(dev_fraction * len(query_ids))))
    dev = sorted(query_ids[i] for i in order[:n_dev])
    dev_set = set(dev)
    train_ids = [qid for qid in query_ids if qid not in dev_set]
    return train_ids, dev


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> ExperimentResult:
    """Run the full comparison and write corpus, runs, CSVs, and figures under out_dir."""
    cfg.validate()
    out = Path(out_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    (out / "history").mkdir(parents=True, exist_ok=True)

    log.info("generating synthetic corpus (seed %d)", cfg.seed)
    store, queries, qrels, hidden = generate_synthetic(cfg.corpus, cfg.seed)
    write_corpus(out / "corpus", store, queries, qrels, hidden)

    index = build_index(store)
    candidates = retrieve_all(index, queries, cfg.top_k, threads=cfg.threads)
    _, dev_ids = split_dev(queries.query_ids(), cfg.dev_fraction, cfg.seed)
    dev_candidates = {qid: candidates[qid] for qid in dev_ids}

    bm25_run = candidates_to_run(dev_candidates, tag="bm25")
    write_run(bm25_run, out / "runs" / "bm25.txt")
    bm25_dev_mrr = mrr_at_k(bm25_run, qrels, cfg.top_k).mrr
    log.info("BM25 dev MRR@%d = %.4f over %d queries", cfg.top_k, bm25_dev_mrr, len(dev_ids))

    rows: list[tuple[str, int, float]] = []
    histories: dict[str, list[EpochRecord]] = {}
    arms = (("bag", cfg.lambda_group), ("random", 0.0))
    for sampler, lambda_group in arms:
        for i in range(cfg.seeds):
            train_seed = cfg.seed + i
            tcfg = TrainConfig(
                epochs=cfg.epochs,
                learning_rate=cfg.learning_rate,
                lambda_group=lambda_group,
                m_bags=cfg.m_bags,
                group_size=cfg.group_size,
                top_k=cfg.top_k,
                sampler=sampler,
                seed=train_seed,
                max_passage_len=cfg.corpus.max_passage_len,
            )
            result = train(
                store, queries, qrels, candidates, index.vocabulary, tcfg, dev_query_ids=dev_ids
            )
            run = rerank(
                result.params,
                dev_candidates,
                store,
                [queries[qid] for qid in dev_ids],
                index.vocabulary,
                seed=train_seed,
                max_passage_len=tcfg.max_passage_len,
                tag=f"{sampler}-s{train_seed}",
            )
            label = f"{sampler}_seed{train_seed}"
            write_run(run, out / "runs" / f"{label}.txt")
            write_history(result.history, out / "history" / f"{label}.csv")
            histories[label] = result.history
            dev_mrr = mrr_at_k(run, qrels, cfg.top_k).mrr
            rows.append((sampler, train_seed, dev_mrr))
            log.info("%s seed %d: dev MRR@%d = %.4f", sampler, train_seed, cfg.top_k, dev_mrr)

    mean_by_sampler = {
        sampler: float(np.mean([m for s, _, m in rows if s == sampler]))
        for sampler in ("bag", "random")
    }

    with open(out / "experiment.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sampler,seed,dev_mrr\n")
        for sampler, seed, mrr in rows:
            fh.write(f"{sampler},{seed},{mrr:.6f}\n")

    summary = [
        f"queries: {cfg.corpus.num_queries} total, {len(dev_ids)} dev",
        f"BM25 first-stage dev MRR@{cfg.top_k}: {bm25_dev_mrr:.6f}",
        f"bag sampler + group loss (lambda={cfg.lambda_group:g}) mean dev MRR@{cfg.top_k}: "
        f"{mean_by_sampler['bag']:.6f}",
        f"random sampler (lambda=0) mean dev MRR@{cfg.top_k}: {mean_by_sampler['random']:.6f}",
        f"gap (bag - random): {mean_by_sampler['bag'] - mean_by_sampler['random']:+.6f}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")

    plot_experiment(rows, bm25_dev_mrr, out / "experiment.png", k=cfg.top_k)
    plot_history(histories, out / "training_curves.png", title="per-run training history")

    return ExperimentResult(
        rows=rows,
        bm25_dev_mrr=bm25_dev_mrr,
        mean_by_sampler=mean_by_sampler,
        dev_query_ids=dev_ids,
        out_dir=out,
    )
