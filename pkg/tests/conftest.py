import numpy as np
import pytest

from noiserank.corpus import Document, DocumentStore, Qrels, Query, QuerySet, SynthConfig, generate_synthetic
from noiserank.retrieval import build_index, retrieve_all

# Small corpus shared by training/loss tests; cheap to regenerate per module.
TINY_CORPUS = SynthConfig(
    num_queries=8,
    docs_per_query_topic=10,
    vocab_size=8 * 12 + 80,
    doc_len_min=60,
    doc_len_max=110,
    max_passage_len=16,
)


@pytest.fixture(scope="module")
def tiny_corpus():
    store, queries, qrels, hidden = generate_synthetic(TINY_CORPUS, seed=11)
    index = build_index(store)
    candidates = retrieve_all(index, queries, k=10)
    return store, queries, qrels, hidden, index, candidates


def make_store(docs: list[tuple[str, str, str]]) -> DocumentStore:
    """Build a store from (doc_id, title, body) triples."""
    from noiserank.retrieval import tokenize

    store = DocumentStore()
    for doc_id, title, body in docs:
        store.add(
            Document(
                doc_id,
                title,
                body,
                token_count=len(tokenize(title)) + len(tokenize(body)),
            )
        )
    return store


def make_qrels(pairs: list[tuple[str, str, int]]) -> Qrels:
    qrels = Qrels()
    for qid, doc_id, grade in pairs:
        qrels.add(qid, doc_id, grade)
    return qrels
