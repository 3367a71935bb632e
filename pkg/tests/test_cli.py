import re

import pytest

from noiserank.cli import build_parser, run

SUBCOMMANDS = [
    "gen-corpus",
    "index",
    "retrieve",
    "train",
    "rerank",
    "eval",
    "experiment",
    "grad-check",
]

TINY_FLAGS = [
    "--num-queries", "6",
    "--docs-per-query", "10",
    "--vocab-size", "152",
    "--doc-len-min", "60",
    "--doc-len-max", "110",
    "--max-passage-len", "14",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-corpus -> index -> retrieve, shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    assert run(["gen-corpus", "--out-dir", str(corpus), "--seed", "3", *TINY_FLAGS]) == 0
    assert run(["index", "--docs", str(corpus / "docs.tsv"), "--index-dir", str(root / "idx")]) == 0
    assert (
        run(
            [
                "retrieve",
                "--index-dir", str(root / "idx"),
                "--queries", str(corpus / "queries.tsv"),
                "--k", "10",
                "--run-out", str(root / "bm25.txt"),
            ]
        )
        == 0
    )
    return root, corpus


def test_help_lists_flags_with_defaults(capsys):
    for sub in SUBCOMMANDS:
        assert run([sub, "--help"]) == 0
        out = capsys.readouterr().out
        assert "default" in out
    assert run(["train", "--help"]) == 0
    out = capsys.readouterr().out
    for flag in (
        "--docs", "--queries", "--qrels", "--index-dir", "--k", "--m-bags",
        "--group-size", "--lambda-group", "--sampler", "--seed", "--config",
    ):
        assert flag in out
    assert run(["rerank", "--help"]) == 0
    out = capsys.readouterr().out
    for flag in ("--run-out", "--threads", "--seed"):
        assert flag in out


def test_unknown_flag_is_usage_error():
    assert run(["retrieve", "--no-such-flag"]) == 1


def test_unknown_subcommand_is_usage_error():
    assert run(["frobnicate"]) == 1


def test_missing_file_is_validation_error(tmp_path):
    assert run(["index", "--docs", str(tmp_path / "nope.tsv"), "--index-dir", str(tmp_path / "i")]) == 1


def test_gen_corpus_writes_expected_files(pipeline):
    root, corpus = pipeline
    for name in ("docs.tsv", "queries.tsv", "qrels.txt", "qrels.hidden"):
        assert (corpus / name).exists()


def test_retrieve_output_bounded_by_corpus(pipeline):
    root, corpus = pipeline
    lines = (root / "bm25.txt").read_text(encoding="utf-8").splitlines()
    per_query = {}
    for line in lines:
        qid = line.split()[0]
        per_query[qid] = per_query.get(qid, 0) + 1
    assert per_query and all(count <= 10 for count in per_query.values())


def test_retrieve_deterministic_bytes(pipeline, tmp_path):
    root, corpus = pipeline
    out2 = tmp_path / "bm25_again.txt"
    assert (
        run(
            [
                "retrieve",
                "--index-dir", str(root / "idx"),
                "--queries", str(corpus / "queries.tsv"),
                "--k", "10",
                "--run-out", str(out2),
            ]
        )
        == 0
    )
    assert out2.read_bytes() == (root / "bm25.txt").read_bytes()


def test_train_rerank_eval_pipeline(pipeline, tmp_path, capsys):
    root, corpus = pipeline
    ckpt = tmp_path / "model.ckpt"
    history = tmp_path / "history.csv"
    code = run(
        [
            "train",
            "--docs", str(corpus / "docs.tsv"),
            "--queries", str(corpus / "queries.tsv"),
            "--qrels", str(corpus / "qrels.txt"),
            "--index-dir", str(root / "idx"),
            "--candidates", str(root / "bm25.txt"),
            "--checkpoint-out", str(ckpt),
            "--history-out", str(history),
            "--epochs", "2",
            "--m-bags", "3",
            "--group-size", "3",
            "--k", "10",
            "--max-passage-len", "14",
            "--seed", "1",
        ]
    )
    assert code == 0
    assert ckpt.exists()
    header = history.read_text(encoding="utf-8").splitlines()[0]
    assert header == "epoch,mean_total,mean_lce_individual,mean_lce_group,dev_mrr,skipped_queries"
    assert history.with_suffix(".png").exists()

    run_out = tmp_path / "reranked.txt"
    code = run(
        [
            "rerank",
            "--checkpoint", str(ckpt),
            "--docs", str(corpus / "docs.tsv"),
            "--queries", str(corpus / "queries.tsv"),
            "--index-dir", str(root / "idx"),
            "--candidates", str(root / "bm25.txt"),
            "--run-out", str(run_out),
            "--seed", "1",
            "--max-passage-len", "14",
        ]
    )
    assert code == 0
    capsys.readouterr()
    code = run(["eval", "--run", str(run_out), "--qrels", str(corpus / "qrels.txt"), "--k", "10"])
    assert code == 0
    out = capsys.readouterr().out
    match = re.search(r"MRR@10: ([0-9.]+)", out)
    assert match and 0.0 <= float(match.group(1)) <= 1.0


def test_train_config_file_with_override(pipeline, tmp_path):
    root, corpus = pipeline
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs=9\nm_bags=3\ngroup_size=3\ntop_k=10\nmax_passage_len=14\n", encoding="utf-8")
    ckpt = tmp_path / "m.ckpt"
    code = run(
        [
            "train",
            "--docs", str(corpus / "docs.tsv"),
            "--queries", str(corpus / "queries.tsv"),
            "--qrels", str(corpus / "qrels.txt"),
            "--index-dir", str(root / "idx"),
            "--candidates", str(root / "bm25.txt"),
            "--checkpoint-out", str(ckpt),
            "--config", str(cfg),
            "--epochs", "1",  # flag overrides the config file
            "--seed", "0",
        ]
    )
    assert code == 0
    assert ckpt.exists()


def test_experiment_writes_reports(tmp_path, capsys):
    out = tmp_path / "exp"
    code = run(
        [
            "experiment",
            "--out-dir", str(out),
            "--seeds", "1",
            "--epochs", "2",
            "--m-bags", "3",
            "--group-size", "3",
            "--dev-fraction", "0.25",
            *TINY_FLAGS,
        ]
    )
    assert code == 0
    assert (out / "experiment.csv").exists()
    assert (out / "summary.txt").exists()
    assert (out / "experiment.png").exists()
    assert (out / "training_curves.png").exists()
    assert (out / "runs" / "bm25.txt").exists()
    csv = (out / "experiment.csv").read_text(encoding="utf-8").splitlines()
    assert csv[0] == "sampler,seed,dev_mrr"
    assert len(csv) == 3  # one row per (sampler, seed)
    summary = capsys.readouterr().out
    assert "BM25 first-stage dev MRR" in summary
