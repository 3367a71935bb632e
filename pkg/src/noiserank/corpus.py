"""Document/query/label stores, interchange-file IO, and the synthetic corpus generator.

File formats follow MS MARCO document-ranking conventions:
docs are 4-field TSV (doc_id, url, title, body), queries are 2-field TSV,
qrels are `query_id 0 doc_id grade` with single spaces. The synthetic
generator additionally writes a hidden-truth file (same shape as qrels)
listing relevant documents deliberately left out of the qrels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .retrieval import tokenize


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    url: str = ""
    token_count: int = 0


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str


class DocumentStore:
    """Insertion-ordered doc_id -> Document map; immutable once loaded."""

    def __init__(self) -> None:
        self._docs: dict[str, Document] = {}

    def add(self, doc: Document) -> None:
        if doc.doc_id in self._docs:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        self._docs[doc.doc_id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def __getitem__(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise KeyError(f"unknown doc_id {doc_id!r}") from None

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs.values())

    def doc_ids(self) -> list[str]:
        return list(self._docs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DocumentStore) and self._docs == other._docs


class QuerySet:
    """Insertion-ordered query_id -> Query map."""

    def __init__(self) -> None:
        self._queries: dict[str, Query] = {}

    def add(self, query: Query) -> None:
        if query.query_id in self._queries:
            raise ValueError(f"duplicate query_id {query.query_id!r}")
        if not query.text:
            raise ValueError(f"query {query.query_id!r} has empty text")
        self._queries[query.query_id] = query

    def __len__(self) -> int:
        return len(self._queries)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._queries

    def __getitem__(self, query_id: str) -> Query:
        try:
            return self._queries[query_id]
        except KeyError:
            raise KeyError(f"unknown query_id {query_id!r}") from None

    def __iter__(self) -> Iterator[Query]:
        return iter(self._queries.values())

    def query_ids(self) -> list[str]:
        return list(self._queries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, QuerySet) and self._queries == other._queries


class Qrels:
    """Graded relevance labels; only grades >= 1 exist (non-relevance is absence)."""

    def __init__(self) -> None:
        self._by_query: dict[str, dict[str, int]] = {}

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 1:
            raise ValueError(f"qrels grade must be >= 1, got {grade} for ({query_id}, {doc_id})")
        positives = self._by_query.setdefault(query_id, {})
        if doc_id in positives:
            raise ValueError(f"duplicate qrels pair ({query_id}, {doc_id})")
        positives[doc_id] = grade

    def positives(self, query_id: str) -> dict[str, int]:
        return self._by_query.get(query_id, {})

    def is_relevant(self, query_id: str, doc_id: str) -> bool:
        return doc_id in self._by_query.get(query_id, {})

    def query_ids(self) -> list[str]:
        return list(self._by_query)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._by_query

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_query.values())

    def items(self) -> Iterator[tuple[str, str, int]]:
        for query_id, positives in self._by_query.items():
            for doc_id, grade in positives.items():
                yield query_id, doc_id, grade

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Qrels) and self._by_query == other._by_query


class HiddenTruth:
    """Truly relevant documents deliberately omitted from the qrels (synthetic only)."""

    def __init__(self) -> None:
        self._by_query: dict[str, set[str]] = {}

    def add(self, query_id: str, doc_id: str) -> None:
        self._by_query.setdefault(query_id, set()).add(doc_id)

    def hidden(self, query_id: str) -> set[str]:
        return self._by_query.get(query_id, set())

    def query_ids(self) -> list[str]:
        return list(self._by_query)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_query.values())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HiddenTruth) and self._by_query == other._by_query


def load_documents(path: str | Path) -> DocumentStore:
    """Load a 4-field docs TSV (doc_id, url, title, body)."""
    store = DocumentStore()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
                )
            doc_id, url, title, body = parts
            if doc_id in store:
                raise ValueError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            token_count = len(tokenize(title)) + len(tokenize(body))
            store.add(Document(doc_id, title, body, url=url, token_count=token_count))
    return store


def load_queries(path: str | Path) -> QuerySet:
    """Load a 2-field queries TSV (query_id, text)."""
    queries = QuerySet()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 2 tab-separated fields, got {len(parts)}"
                )
            query_id, text = parts
            if not text:
                raise ValueError(f"{path}:{lineno}: empty query text")
            if query_id in queries:
                raise ValueError(f"{path}:{lineno}: duplicate query_id {query_id!r}")
            queries.add(Query(query_id, text))
    return queries


def _parse_qrels_line(path: str | Path, lineno: int, line: str) -> tuple[str, str, int]:
    parts = line.split()
    if len(parts) != 4:
        raise ValueError(f"{path}:{lineno}: expected 4 whitespace-separated fields")
    query_id, _, doc_id, grade_str = parts
    try:
        grade = int(grade_str)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: grade {grade_str!r} is not an integer") from None
    return query_id, doc_id, grade


def load_qrels(path: str | Path, store: DocumentStore | None = None) -> Qrels:
    """Load TREC-style qrels; grades below 1 are rejected.

    When a store is given, every referenced doc_id must exist in it.
    """
    qrels = Qrels()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            query_id, doc_id, grade = _parse_qrels_line(path, lineno, line)
            if grade < 1:
                raise ValueError(f"{path}:{lineno}: grade must be >= 1, got {grade}")
            if store is not None and doc_id not in store:
                raise ValueError(f"{path}:{lineno}: doc_id {doc_id!r} not in document store")
            try:
                qrels.add(query_id, doc_id, grade)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return qrels


def load_hidden_truth(path: str | Path) -> HiddenTruth:
    """Load a hidden-truth file (same line format as qrels)."""
    hidden = HiddenTruth()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            query_id, doc_id, grade = _parse_qrels_line(path, lineno, line)
            if grade < 1:
                raise ValueError(f"{path}:{lineno}: grade must be >= 1, got {grade}")
            hidden.add(query_id, doc_id)
    return hidden


def write_documents(store: DocumentStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in store:
            fh.write(f"{doc.doc_id}\t{doc.url}\t{doc.title}\t{doc.body}\n")


def write_queries(queries: QuerySet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for query in queries:
            fh.write(f"{query.query_id}\t{query.text}\n")


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for query_id, doc_id, grade in qrels.items():
            fh.write(f"{query_id} 0 {doc_id} {grade}\n")


def write_hidden_truth(hidden: HiddenTruth, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for query_id in hidden.query_ids():
            for doc_id in sorted(hidden.hidden(query_id)):
                fh.write(f"{query_id} 0 {doc_id} 1\n")


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic noisy-label corpus.

    Each query gets a disjoint topic vocabulary. Relevant documents cover the
    whole topic and draw the remainder mostly from a shared content pool;
    distractors are thinner on topic terms and mix in a shared filler pool.
    A configurable fraction of distractors is "stuffed": their topic tokens
    repeat exactly the query terms, which inflates their BM25 score while
    their filler-heavy profile still marks them as non-relevant. Exactly one
    relevant document per query is labeled; the others become hidden truth,
    built as lexical near-duplicates of the labeled one.
    """

    num_queries: int = 200
    docs_per_query_topic: int = 30
    vocab_size: int = 3400
    doc_len_min: int = 180
    doc_len_max: int = 320
    relevant_per_query: int = 3
    labeled_per_query: int = 1
    query_len: int = 5
    topic_terms: int = 12
    max_passage_len: int = 64
    positive_topic_density: float = 0.60
    positive_filler_share: float = 0.05
    distractor_topic_density_min: float = 0.15
    distractor_topic_density_max: float = 0.50
    distractor_filler_share_min: float = 0.30
    distractor_filler_share_max: float = 0.70
    stuffed_fraction: float = 0.2
    stuffed_density_min: float = 0.15
    stuffed_density_max: float = 0.33
    near_duplicate_noise: float = 0.15

    def validate(self) -> None:
        if self.relevant_per_query < 2:
            raise ValueError(
                "relevant_per_query must be >= 2 (one labeled plus at least one hidden positive)"
            )
        if self.labeled_per_query != 1:
            raise ValueError("labeled_per_query must be 1")
        if self.num_queries < 1:
            raise ValueError("num_queries must be >= 1")
        if self.docs_per_query_topic <= self.relevant_per_query:
            raise ValueError("docs_per_query_topic must exceed relevant_per_query")
        if self.query_len > self.topic_terms:
            raise ValueError("query_len cannot exceed topic_terms")
        if not 4 <= self.doc_len_min <= self.doc_len_max:
            raise ValueError("need 4 <= doc_len_min <= doc_len_max")
        if self.doc_len_max <= 4 * self.max_passage_len:
            raise ValueError(
                "doc_len_max must exceed 4 * max_passage_len so long-document splitting is exercised"
            )
        shared = self.vocab_size - self.num_queries * self.topic_terms
        if shared < 60:
            raise ValueError(
                "vocabulary too small to separate topics: "
                f"need at least {self.num_queries * self.topic_terms + 60} terms, got {self.vocab_size}"
            )


def _term(tid: int) -> str:
    return f"w{tid:05d}"


def _compose_body(
    rng: np.random.Generator,
    length: int,
    topic_ids: np.ndarray,
    content_lo: int,
    content_hi: int,
    filler_lo: int,
    filler_hi: int,
    topic_density: float,
    filler_share: float,
) -> np.ndarray:
    """Draw body tokens iid from the topic/content/filler mixture."""
    p_topic = topic_density
    p_filler = (1.0 - topic_density) * filler_share
    p_content = 1.0 - p_topic - p_filler
    kind = rng.choice(3, size=length, p=[p_topic, p_content, p_filler])
    out = np.empty(length, dtype=np.int64)
    n_topic = int((kind == 0).sum())
    n_content = int((kind == 1).sum())
    n_filler = length - n_topic - n_content
    out[kind == 0] = rng.choice(topic_ids, size=n_topic, replace=True)
    out[kind == 1] = rng.integers(content_lo, content_hi, size=n_content)
    out[kind == 2] = rng.integers(filler_lo, filler_hi, size=n_filler)
    return out


def generate_synthetic(
    cfg: SynthConfig, seed: int
) -> tuple[DocumentStore, QuerySet, Qrels, HiddenTruth]:
    """Generate a corpus with exactly one labeled positive per query and the
    remaining relevant documents recorded only in the hidden truth.

    Pure function of (cfg, seed): two calls produce identical stores.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)

    topic_block = cfg.num_queries * cfg.topic_terms
    shared = cfg.vocab_size - topic_block
    content_lo, content_hi = topic_block, topic_block + (2 * shared) // 3
    filler_lo, filler_hi = content_hi, cfg.vocab_size

    store = DocumentStore()
    queries = QuerySet()
    qrels = Qrels()
    hidden = HiddenTruth()

    for qi in range(cfg.num_queries):
        query_id = f"q{qi:04d}"
        topic_ids = np.arange(qi * cfg.topic_terms, (qi + 1) * cfg.topic_terms, dtype=np.int64)
        query_terms = rng.choice(topic_ids, size=cfg.query_len, replace=False)
        queries.add(Query(query_id, " ".join(_term(t) for t in query_terms)))

        title_ids = rng.choice(topic_ids, size=3, replace=False)
        title = " ".join(_term(t) for t in title_ids)

        # Labeled positive: topic-dense, almost no filler.
        pos_len = int(rng.integers(cfg.doc_len_min, cfg.doc_len_max + 1)) - 3
        pos_body = _compose_body(
            rng,
            pos_len,
            topic_ids,
            content_lo,
            content_hi,
            filler_lo,
            filler_hi,
            cfg.positive_topic_density,
            cfg.positive_filler_share,
        )
        num_docs = cfg.docs_per_query_topic
        for j in range(num_docs):
            doc_id = f"D{qi:04d}x{j:02d}"
            if j == 0:
                body_ids = pos_body
                qrels.add(query_id, doc_id, 1)
            elif j < cfg.relevant_per_query:
                # Hidden positive: copy the labeled positive, resample a noise
                # fraction of positions from the same mixture.
                body_ids = pos_body.copy()
                n_flip = int(round(cfg.near_duplicate_noise * len(body_ids)))
                if n_flip:
                    flip = rng.choice(len(body_ids), size=n_flip, replace=False)
                    body_ids[flip] = _compose_body(
                        rng,
                        n_flip,
                        topic_ids,
                        content_lo,
                        content_hi,
                        filler_lo,
                        filler_hi,
                        cfg.positive_topic_density,
                        cfg.positive_filler_share,
                    )
                hidden.add(query_id, doc_id)
            else:
                length = int(rng.integers(cfg.doc_len_min, cfg.doc_len_max + 1)) - 3
                if rng.random() < cfg.stuffed_fraction:
                    # Query-term stuffing: high tf on exactly the query terms.
                    doc_topic_ids = query_terms
                    density = rng.uniform(cfg.stuffed_density_min, cfg.stuffed_density_max)
                else:
                    doc_topic_ids = topic_ids
                    density = rng.uniform(
                        cfg.distractor_topic_density_min, cfg.distractor_topic_density_max
                    )
                filler_share = rng.uniform(
                    cfg.distractor_filler_share_min, cfg.distractor_filler_share_max
                )
                body_ids = _compose_body(
                    rng,
                    length,
                    doc_topic_ids,
                    content_lo,
                    content_hi,
                    filler_lo,
                    filler_hi,
                    density,
                    filler_share,
                )
            body = " ".join(_term(t) for t in body_ids)
            store.add(
                Document(
                    doc_id,
                    title,
                    body,
                    url=f"synthetic://{doc_id}",
                    token_count=3 + len(body_ids),
                )
            )
    return store, queries, qrels, hidden


def write_corpus(
    out_dir: str | Path,
    store: DocumentStore,
    queries: QuerySet,
    qrels: Qrels,
    hidden: HiddenTruth | None = None,
) -> dict[str, Path]:
    """Write the standard file set into out_dir and return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "docs": out / "docs.tsv",
        "queries": out / "queries.tsv",
        "qrels": out / "qrels.txt",
    }
    write_documents(store, paths["docs"])
    write_queries(queries, paths["queries"])
    write_qrels(qrels, paths["qrels"])
    if hidden is not None:
        paths["hidden"] = out / "qrels.hidden"
        write_hidden_truth(hidden, paths["hidden"])
    return paths
