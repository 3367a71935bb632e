"""Reranking with a trained scorer, TREC-style run-file IO, and MRR@k."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import DocumentStore, Qrels, Query
from .model import CorpusEncoder, ScorerParams, score_document_pools
from .retrieval import CandidateList, Vocabulary


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    score: float
    rank: int


@dataclass
class RunFile:
    """Per-query rankings: ranks contiguous from 1, scores descending,
    ties ordered by ascending doc_id."""

    tag: str
    per_query: dict[str, list[RunEntry]]

    def query_ids(self) -> list[str]:
        return list(self.per_query)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RunFile):
            return NotImplemented
        return self.tag == other.tag and self.per_query == other.per_query


@dataclass
class MetricReport:
    mrr: float
    per_query_rr: dict[str, float]
    k: int
    num_queries: int
    num_zero_queries: int
    num_unjudged: int


def _ranked_entries(scored: list[tuple[str, float]]) -> list[RunEntry]:
    ordered = sorted(scored, key=lambda item: (-item[1], item[0]))
    return [
        RunEntry(doc_id=doc_id, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(ordered, start=1)
    ]


def rerank(
    params: ScorerParams,
    candidates: dict[str, CandidateList],
    store: DocumentStore,
    queries: Iterable[Query],
    vocabulary: Vocabulary,
    seed: int,
    max_passage_len: int,
    tag: str = "noiserank",
    threads: int = 1,
    encoder: CorpusEncoder | None = None,
) -> RunFile:
    """Rescore every candidate with the document scorer and re-sort.

    Passage windows are drawn with the given seed (the frozen inference
    layout). The output contains exactly the input candidates per query.
    """
    if encoder is None:
        encoder = CorpusEncoder(store, vocabulary, max_passage_len, seed)
    if encoder.model_vocab_size != params.embedding_table.shape[0]:
        raise ValueError(
            f"params vocab size {params.embedding_table.shape[0]} does not match "
            f"corpus vocabulary plus specials ({encoder.model_vocab_size})"
        )
    queries = [q for q in queries if q.query_id in candidates]

    def score_query(query: Query) -> tuple[str, list[RunEntry]]:
        qpool = encoder.query_pool(query)
        scored = []
        for entry in candidates[query.query_id].entries:
            if entry.doc_id not in store:
                raise ValueError(
                    f"candidate {entry.doc_id!r} for query {query.query_id!r} "
                    "is missing from the document store"
                )
            result = score_document_pools(params, qpool, encoder.passage_pools(entry.doc_id))
            scored.append((entry.doc_id, result.doc_score))
        return query.query_id, _ranked_entries(scored)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score_query, queries))
    else:
        results = [score_query(q) for q in queries]
    return RunFile(tag=tag, per_query=dict(results))


def candidates_to_run(candidates: dict[str, CandidateList], tag: str = "bm25") -> RunFile:
    """View a first-stage candidate set as a run file (for baseline evaluation)."""
    per_query = {
        qid: [RunEntry(e.doc_id, e.score, e.rank) for e in clist.entries]
        for qid, clist in candidates.items()
    }
    return RunFile(tag=tag, per_query=per_query)


def run_to_candidates(run: RunFile) -> dict[str, CandidateList]:
    """Read a run file back as candidate lists (first-stage output interchange)."""
    from .retrieval import CandidateEntry

    return {
        qid: CandidateList(
            query_id=qid,
            entries=[CandidateEntry(e.doc_id, e.score, e.rank) for e in entries],
        )
        for qid, entries in run.per_query.items()
    }


def write_run(run: RunFile, path: str | Path) -> None:
    """Write `query_id Q0 doc_id rank score tag` lines, scores to 6 decimals."""
    if not run.tag or any(c.isspace() for c in run.tag):
        raise ValueError(f"run tag must be non-empty and whitespace-free, got {run.tag!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for query_id, entries in run.per_query.items():
            for entry in entries:
                fh.write(
                    f"{query_id} Q0 {entry.doc_id} {entry.rank} {entry.score:.6f} {run.tag}\n"
                )


def read_run(path: str | Path) -> RunFile:
    """Parse and validate a run file written by write_run."""
    per_query: dict[str, list[RunEntry]] = {}
    seen_docs: dict[str, set[str]] = {}
    tag = "noiserank"
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            query_id, _, doc_id, rank_str, score_str, tag = parts
            try:
                rank = int(rank_str)
                score = float(score_str)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed rank or score") from None
            entries = per_query.setdefault(query_id, [])
            docs = seen_docs.setdefault(query_id, set())
            if doc_id in docs:
                raise ValueError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            if rank != len(entries) + 1:
                raise ValueError(
                    f"{path}:{lineno}: rank {rank} breaks the contiguous order "
                    f"(expected {len(entries) + 1})"
                )
            if entries and score > entries[-1].score:
                raise ValueError(f"{path}:{lineno}: score increases with rank")
            entries.append(RunEntry(doc_id=doc_id, score=score, rank=rank))
            docs.add(doc_id)
    return RunFile(tag=tag, per_query=per_query)


def mrr_at_k(run: RunFile, qrels: Qrels, k: int) -> MetricReport:
    """Mean reciprocal rank of the first relevant document within the top k.

    Queries present in the run but absent from the qrels are excluded and
    counted in num_unjudged.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per_query_rr: dict[str, float] = {}
    num_unjudged = 0
    for query_id, entries in run.per_query.items():
        if query_id not in qrels:
            num_unjudged += 1
            continue
        positives = qrels.positives(query_id)
        rr = 0.0
        for entry in entries:
            if entry.rank > k:
                break
            if entry.doc_id in positives:
                rr = 1.0 / entry.rank
                break
        per_query_rr[query_id] = rr
    num_queries = len(per_query_rr)
    # Plain left-to-right sum: exact agreement with a linear-scan oracle.
    mrr = sum(per_query_rr.values()) / num_queries if num_queries else 0.0
    return MetricReport(
        mrr=mrr,
        per_query_rr=per_query_rr,
        k=k,
        num_queries=num_queries,
        num_zero_queries=sum(1 for v in per_query_rr.values() if v == 0.0),
        num_unjudged=num_unjudged,
    )


def report_text(report: MetricReport) -> str:
    lines = [
        f"MRR@{report.k}: {report.mrr:.6f}",
        f"queries evaluated: {report.num_queries}",
        f"queries without a relevant hit in top {report.k}: {report.num_zero_queries}",
        f"queries excluded (not in qrels): {report.num_unjudged}",
    ]
    return "\n".join(lines)


def write_metric_csv(report: MetricReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("query_id,reciprocal_rank\n")
        for query_id, rr in report.per_query_rr.items():
            fh.write(f"{query_id},{rr:.6f}\n")
