"""Tokenization, inverted index construction, and Okapi BM25 first-stage retrieval."""

from __future__ import annotations

import json
import math
import re
from bisect import bisect_left
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np

if TYPE_CHECKING:
    from .corpus import DocumentStore, Query

# Anserini-style MS MARCO defaults.
BM25_K1 = 0.9
BM25_B = 0.4

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_INDEX_META = "meta.json"
_INDEX_VOCAB = "vocabulary.txt"
_INDEX_DOCS = "docs.tsv"
_INDEX_OFFSETS = "postings_offsets.npy"
_INDEX_DOC_IDX = "postings_doc_idx.npy"
_INDEX_TF = "postings_tf.npy"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; empty input gives []."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Interned terms with dense ids assigned in first-seen order."""

    def __init__(self) -> None:
        self._id_of: dict[str, int] = {}
        self._terms: list[str] = []

    def intern(self, term: str) -> int:
        tid = self._id_of.get(term)
        if tid is None:
            tid = len(self._terms)
            self._id_of[term] = tid
            self._terms.append(term)
        return tid

    def id_of(self, term: str) -> int | None:
        return self._id_of.get(term)

    def term(self, tid: int) -> str:
        return self._terms[tid]

    @property
    def terms(self) -> list[str]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._terms == other._terms


@dataclass
class InvertedIndex:
    """Postings sorted by doc_id per term, plus the length statistics BM25 needs."""

    vocabulary: Vocabulary
    postings: list[list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and self.postings == other.postings
            and self.doc_lengths == other.doc_lengths
            and self.avg_doc_length == other.avg_doc_length
            and self.doc_count == other.doc_count
        )


@dataclass(frozen=True)
class CandidateEntry:
    doc_id: str
    score: float
    rank: int


@dataclass
class CandidateList:
    """Top-k first-stage ranking for one query, scores descending, ranks from 1."""

    query_id: str
    entries: list[CandidateEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]


def doc_tokens(doc) -> list[str]:
    """Title and body tokenized and concatenated (field boundary never merges tokens)."""
    return tokenize(doc.title) + tokenize(doc.body)


def build_index(store: "DocumentStore") -> InvertedIndex:
    """Build the inverted index over every document in the store."""
    if len(store) == 0:
        raise ValueError("cannot build an index over an empty document store")
    vocabulary = Vocabulary()
    postings: list[list[tuple[str, int]]] = []
    doc_lengths: dict[str, int] = {}
    for doc in store:
        tokens = doc_tokens(doc)
        doc_lengths[doc.doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            tid = vocabulary.intern(term)
            if tid == len(postings):
                postings.append([])
            postings[tid].append((doc.doc_id, tf))
    for plist in postings:
        plist.sort(key=lambda entry: entry[0])
    doc_count = len(doc_lengths)
    avg_doc_length = sum(doc_lengths.values()) / doc_count
    return InvertedIndex(vocabulary, postings, doc_lengths, avg_doc_length, doc_count)


def _idf(doc_count: int, df: int) -> float:
    return math.log(1.0 + (doc_count - df + 0.5) / (df + 0.5))


def _tf_in_doc(plist: list[tuple[str, int]], doc_id: str) -> int:
    pos = bisect_left(plist, doc_id, key=lambda entry: entry[0])
    if pos < len(plist) and plist[pos][0] == doc_id:
        return plist[pos][1]
    return 0


def bm25_score(index: InvertedIndex, query_terms: Iterable[str], doc_id: str) -> float:
    """Okapi BM25 score of one document; terms absent from index or doc contribute 0.

    Duplicate query terms contribute once per occurrence.
    """
    doc_len = index.doc_lengths.get(doc_id)
    if doc_len is None:
        raise ValueError(f"unknown doc_id {doc_id!r}")
    norm = BM25_K1 * (1.0 - BM25_B + BM25_B * doc_len / index.avg_doc_length)
    score = 0.0
    for term in query_terms:
        tid = index.vocabulary.id_of(term)
        if tid is None:
            continue
        tf = _tf_in_doc(index.postings[tid], doc_id)
        if tf == 0:
            continue
        idf = _idf(index.doc_count, len(index.postings[tid]))
        score += idf * tf * (BM25_K1 + 1.0) / (tf + norm)
    return score


def retrieve(index: InvertedIndex, query: "Query", k: int) -> CandidateList:
    """Top-k documents by BM25, ties broken by ascending doc_id.

    Only documents matching at least one query term are candidates, so the
    list may be shorter than k.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    accumulator: dict[str, float] = {}
    for term in tokenize(query.text):
        tid = index.vocabulary.id_of(term)
        if tid is None:
            continue
        plist = index.postings[tid]
        idf = _idf(index.doc_count, len(plist))
        for doc_id, tf in plist:
            norm = BM25_K1 * (
                1.0 - BM25_B + BM25_B * index.doc_lengths[doc_id] / index.avg_doc_length
            )
            contribution = idf * tf * (BM25_K1 + 1.0) / (tf + norm)
            accumulator[doc_id] = accumulator.get(doc_id, 0.0) + contribution
    ranked = sorted(accumulator.items(), key=lambda item: (-item[1], item[0]))[:k]
    entries = [
        CandidateEntry(doc_id=doc_id, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(ranked, start=1)
    ]
    return CandidateList(query_id=query.query_id, entries=entries)


def retrieve_all(
    index: InvertedIndex, queries: Iterable["Query"], k: int, threads: int = 1
) -> dict[str, CandidateList]:
    """Retrieve for many queries; result order follows the input order regardless of threads."""
    queries = list(queries)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda q: retrieve(index, q, k), queries))
    else:
        results = [retrieve(index, q, k) for q in queries]
    return {q.query_id: res for q, res in zip(queries, results)}


def save_index(index: InvertedIndex, index_dir: str | Path) -> None:
    """Persist the index as plain text plus .npy arrays (deterministic bytes)."""
    out = Path(index_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"format": "noiserank-index", "version": 1, "doc_count": index.doc_count}
    (out / _INDEX_META).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    (out / _INDEX_VOCAB).write_text(
        "".join(term + "\n" for term in index.vocabulary.terms), encoding="utf-8"
    )
    (out / _INDEX_DOCS).write_text(
        "".join(f"{doc_id}\t{length}\n" for doc_id, length in index.doc_lengths.items()),
        encoding="utf-8",
    )
    doc_pos = {doc_id: i for i, doc_id in enumerate(index.doc_lengths)}
    offsets = np.zeros(len(index.postings) + 1, dtype=np.int64)
    for tid, plist in enumerate(index.postings):
        offsets[tid + 1] = offsets[tid] + len(plist)
    doc_idx = np.empty(int(offsets[-1]), dtype=np.int32)
    tfs = np.empty(int(offsets[-1]), dtype=np.int32)
    pos = 0
    for plist in index.postings:
        for doc_id, tf in plist:
            doc_idx[pos] = doc_pos[doc_id]
            tfs[pos] = tf
            pos += 1
    np.save(out / _INDEX_OFFSETS, offsets)
    np.save(out / _INDEX_DOC_IDX, doc_idx)
    np.save(out / _INDEX_TF, tfs)


def load_index(index_dir: str | Path) -> InvertedIndex:
    """Load an index written by save_index."""
    src = Path(index_dir)
    meta = json.loads((src / _INDEX_META).read_text(encoding="utf-8"))
    if meta.get("format") != "noiserank-index":
        raise ValueError(f"{src}: not a noiserank index directory")
    vocabulary = Vocabulary()
    for term in (src / _INDEX_VOCAB).read_text(encoding="utf-8").splitlines():
        vocabulary.intern(term)
    doc_lengths: dict[str, int] = {}
    for lineno, line in enumerate((src / _INDEX_DOCS).read_text(encoding="utf-8").splitlines(), 1):
        doc_id, _, length = line.partition("\t")
        if not length:
            raise ValueError(f"{src / _INDEX_DOCS}:{lineno}: malformed line")
        doc_lengths[doc_id] = int(length)
    doc_ids = list(doc_lengths)
    offsets = np.load(src / _INDEX_OFFSETS)
    doc_idx = np.load(src / _INDEX_DOC_IDX)
    tfs = np.load(src / _INDEX_TF)
    postings = [
        [
            (doc_ids[doc_idx[i]], int(tfs[i]))
            for i in range(int(offsets[tid]), int(offsets[tid + 1]))
        ]
        for tid in range(len(vocabulary))
    ]
    doc_count = len(doc_lengths)
    avg_doc_length = sum(doc_lengths.values()) / doc_count
    return InvertedIndex(vocabulary, postings, doc_lengths, avg_doc_length, doc_count)
