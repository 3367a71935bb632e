import dataclasses

import pytest

from noiserank.corpus import (
    SynthConfig,
    generate_synthetic,
    load_documents,
    load_hidden_truth,
    load_qrels,
    load_queries,
    write_corpus,
    write_documents,
    write_hidden_truth,
    write_qrels,
    write_queries,
)
from noiserank.retrieval import tokenize

from conftest import make_store

SMALL = SynthConfig(
    num_queries=3,
    docs_per_query_topic=8,
    vocab_size=3 * 12 + 80,
    doc_len_min=50,
    doc_len_max=90,
    max_passage_len=12,
)


def test_load_documents_single_record(tmp_path):
    path = tmp_path / "docs.tsv"
    path.write_text("D1\tu\tT\tB\n", encoding="utf-8")
    store = load_documents(path)
    assert len(store) == 1
    doc = store["D1"]
    assert (doc.url, doc.title, doc.body) == ("u", "T", "B")
    assert doc.token_count == 2


def test_load_documents_empty_file(tmp_path):
    path = tmp_path / "docs.tsv"
    path.write_text("", encoding="utf-8")
    assert len(load_documents(path)) == 0


def test_load_documents_duplicate_id(tmp_path):
    path = tmp_path / "docs.tsv"
    path.write_text("D1\tu\ta\tb\nD1\tu\tc\td\n", encoding="utf-8")
    with pytest.raises(ValueError, match=r":2.*duplicate"):
        load_documents(path)


def test_load_documents_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "docs.tsv"
    path.write_text("D1\tu\ta\tb\nD2\tu\tc\n", encoding="utf-8")
    with pytest.raises(ValueError, match=r":2"):
        load_documents(path)


def test_load_queries(tmp_path):
    path = tmp_path / "queries.tsv"
    path.write_text("q1\thello world\nq2\tfoo\n", encoding="utf-8")
    queries = load_queries(path)
    assert queries.query_ids() == ["q1", "q2"]
    assert queries["q1"].text == "hello world"


def test_load_queries_rejects_empty_text_and_duplicates(tmp_path):
    path = tmp_path / "queries.tsv"
    path.write_text("q1\t\n", encoding="utf-8")
    with pytest.raises(ValueError, match="empty query text"):
        load_queries(path)
    path.write_text("q1\ta\nq1\tb\n", encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate"):
        load_queries(path)


def test_load_qrels_basic(tmp_path):
    path = tmp_path / "qrels.txt"
    path.write_text("q1 0 D7 1\n", encoding="utf-8")
    qrels = load_qrels(path)
    assert qrels.positives("q1") == {"D7": 1}


def test_load_qrels_two_positives(tmp_path):
    path = tmp_path / "qrels.txt"
    path.write_text("q1 0 D7 1\nq1 0 D8 2\n", encoding="utf-8")
    qrels = load_qrels(path)
    assert qrels.positives("q1") == {"D7": 1, "D8": 2}


def test_load_qrels_rejects_grade_zero(tmp_path):
    path = tmp_path / "qrels.txt"
    path.write_text("q1 0 D7 0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="grade"):
        load_qrels(path)


def test_load_qrels_rejects_bad_field_count(tmp_path):
    path = tmp_path / "qrels.txt"
    path.write_text("q1 0 D7\n", encoding="utf-8")
    with pytest.raises(ValueError, match="4 whitespace"):
        load_qrels(path)


def test_load_qrels_validates_against_store(tmp_path):
    store = make_store([("D1", "t", "b")])
    path = tmp_path / "qrels.txt"
    path.write_text("q1 0 D9 1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="not in document store"):
        load_qrels(path, store)
    path.write_text("q1 0 D1 1\n", encoding="utf-8")
    assert load_qrels(path, store).positives("q1") == {"D1": 1}


def test_load_qrels_rejects_duplicate_pair(tmp_path):
    path = tmp_path / "qrels.txt"
    path.write_text("q1 0 D1 1\nq1 0 D1 1\n", encoding="utf-8")
    with pytest.raises(ValueError, match=r":2.*duplicate"):
        load_qrels(path)


def test_generate_synthetic_label_split():
    cfg = dataclasses.replace(SMALL, num_queries=1, relevant_per_query=3)
    store, queries, qrels, hidden = generate_synthetic(cfg, seed=7)
    (qid,) = queries.query_ids()
    assert len(qrels.positives(qid)) == 1
    assert len(hidden.hidden(qid)) == 2
    assert not set(qrels.positives(qid)) & hidden.hidden(qid)


def test_generate_synthetic_deterministic(tmp_path):
    a = generate_synthetic(SMALL, seed=3)
    b = generate_synthetic(SMALL, seed=3)
    assert a[0] == b[0] and a[1] == b[1] and a[2] == b[2] and a[3] == b[3]
    for i, bundle in enumerate((a, b)):
        out = tmp_path / f"run{i}"
        write_corpus(out, *bundle)
    for name in ("docs.tsv", "queries.tsv", "qrels.txt", "qrels.hidden"):
        assert (tmp_path / "run0" / name).read_bytes() == (tmp_path / "run1" / name).read_bytes()


def test_generate_synthetic_rejects_single_relevant():
    with pytest.raises(ValueError, match="relevant_per_query"):
        generate_synthetic(dataclasses.replace(SMALL, relevant_per_query=1), seed=0)


def test_generate_synthetic_rejects_small_vocabulary():
    with pytest.raises(ValueError, match="vocabulary too small"):
        generate_synthetic(dataclasses.replace(SMALL, vocab_size=40), seed=0)


def test_generate_synthetic_requires_long_documents():
    with pytest.raises(ValueError, match="max_passage_len"):
        generate_synthetic(dataclasses.replace(SMALL, max_passage_len=30), seed=0)


def test_generate_synthetic_token_counts():
    store, _, _, _ = generate_synthetic(SMALL, seed=5)
    for doc in store:
        assert doc.token_count == len(tokenize(doc.title)) + len(tokenize(doc.body))


def test_corpus_round_trip(tmp_path):
    store, queries, qrels, hidden = generate_synthetic(SMALL, seed=9)
    write_documents(store, tmp_path / "docs.tsv")
    write_queries(queries, tmp_path / "queries.tsv")
    write_qrels(qrels, tmp_path / "qrels.txt")
    write_hidden_truth(hidden, tmp_path / "qrels.hidden")
    assert load_documents(tmp_path / "docs.tsv") == store
    assert load_queries(tmp_path / "queries.tsv") == queries
    assert load_qrels(tmp_path / "qrels.txt", store) == qrels
    assert load_hidden_truth(tmp_path / "qrels.hidden") == hidden
