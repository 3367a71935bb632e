"""Command-line interface for the full pipeline.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
The NOISERANK_LOG environment variable (error | info | debug) sets verbosity;
diagnostics go to stderr, primary outputs to files or stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    SynthConfig,
    generate_synthetic,
    load_documents,
    load_qrels,
    load_queries,
    write_corpus,
)
from .evaluation import (
    candidates_to_run,
    mrr_at_k,
    read_run,
    rerank,
    report_text,
    run_to_candidates,
    write_metric_csv,
    write_run,
)
from .experiment import ExperimentConfig, gradient_check_toy, run_experiment, split_dev
from .model import load_checkpoint, save_checkpoint
from .retrieval import build_index, load_index, retrieve_all, save_index
from .training import TrainConfig, config_from_mapping, parse_config_file, train, write_history

log = logging.getLogger("noiserank.cli")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level_name = os.environ.get("NOISERANK_LOG", "info").lower()
    level = _LOG_LEVELS.get(level_name)
    if level is None:
        print(
            f"noiserank: ignoring invalid NOISERANK_LOG={level_name!r} "
            "(expected error, info, or debug)",
            file=sys.stderr,
        )
        level = logging.INFO
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _add_corpus_flags(parser: argparse.ArgumentParser) -> None:
    defaults = SynthConfig()
    parser.add_argument(
        "--num-queries", type=int, default=defaults.num_queries, help="queries to generate"
    )
    parser.add_argument(
        "--docs-per-query",
        type=int,
        default=defaults.docs_per_query_topic,
        help="documents per query topic",
    )
    parser.add_argument(
        "--vocab-size", type=int, default=defaults.vocab_size, help="total vocabulary size"
    )
    parser.add_argument(
        "--doc-len-min", type=int, default=defaults.doc_len_min, help="minimum tokens per document"
    )
    parser.add_argument(
        "--doc-len-max", type=int, default=defaults.doc_len_max, help="maximum tokens per document"
    )
    parser.add_argument(
        "--relevant-per-query",
        type=int,
        default=defaults.relevant_per_query,
        help="relevant documents per query (1 labeled, rest hidden)",
    )
    parser.add_argument(
        "--query-len", type=int, default=defaults.query_len, help="terms per query"
    )
    parser.add_argument(
        "--topic-terms", type=int, default=defaults.topic_terms, help="topic vocabulary per query"
    )
    parser.add_argument(
        "--near-duplicate-noise",
        type=float,
        default=defaults.near_duplicate_noise,
        help="token fraction resampled in hidden positives",
    )
    parser.add_argument(
        "--max-passage-len",
        type=int,
        default=defaults.max_passage_len,
        help="passage window length the corpus is sized for",
    )


def _corpus_config(args: argparse.Namespace) -> SynthConfig:
    return SynthConfig(
        num_queries=args.num_queries,
        docs_per_query_topic=args.docs_per_query,
        vocab_size=args.vocab_size,
        doc_len_min=args.doc_len_min,
        doc_len_max=args.doc_len_max,
        relevant_per_query=args.relevant_per_query,
        query_len=args.query_len,
        topic_terms=args.topic_terms,
        near_duplicate_noise=args.near_duplicate_noise,
        max_passage_len=args.max_passage_len,
    )


_TRAIN_OVERRIDES = {
    "epochs": "epochs",
    "learning_rate": "learning_rate",
    "lambda_group": "lambda_group",
    "m_bags": "m_bags",
    "group_size": "group_size",
    "k": "top_k",
    "sampler": "sampler",
    "seed": "seed",
    "checkpoint_every": "checkpoint_every",
    "max_passage_len": "max_passage_len",
}


def build_parser() -> _Parser:
    parser = _Parser(
        prog="noiserank",
        description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"noiserank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser(
        "gen-corpus",
        help="generate a synthetic corpus with hidden unlabeled positives",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    _add_corpus_flags(p)

    p = sub.add_parser(
        "index",
        help="build and save the inverted index",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--docs", required=True, help="4-field docs TSV")
    p.add_argument("--index-dir", required=True, help="index directory")

    p = sub.add_parser(
        "retrieve",
        help="BM25 top-k retrieval, written as a run file",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--index-dir", required=True, help="index directory")
    p.add_argument("--queries", required=True, help="2-field queries TSV")
    p.add_argument("--k", type=int, default=100, help="candidate depth / evaluation cutoff")
    p.add_argument("--run-out", required=True, help="output run file")
    p.add_argument("--tag", default="bm25", help="run tag written in column 6")
    p.add_argument("--threads", type=int, default=1, help="parallel query workers")

    p = sub.add_parser(
        "train",
        help="train the reranker on precomputed candidates",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--docs", required=True, help="4-field docs TSV")
    p.add_argument("--queries", required=True, help="2-field queries TSV")
    p.add_argument("--qrels", required=True, help="TREC-style qrels file")
    p.add_argument("--index-dir", required=True, help="index directory")
    p.add_argument("--candidates", required=True, help="first-stage run file")
    p.add_argument("--config", default=None, help="key=value training config file")
    p.add_argument("--checkpoint-out", required=True, help="best-model checkpoint path")
    p.add_argument("--history-out", default=None, help="per-epoch CSV (a .png lands beside it)")
    p.add_argument("--dev-fraction", type=float, default=0.2, help="held-out dev query fraction")
    p.add_argument("--epochs", type=int, default=None, help="override config")
    p.add_argument("--learning-rate", type=float, default=None, help="override config")
    p.add_argument("--lambda-group", type=float, default=None, help="override config")
    p.add_argument("--m-bags", type=int, default=None, help="override config")
    p.add_argument("--group-size", type=int, default=None, help="override config")
    p.add_argument("--k", type=int, default=None, help="override config top_k")
    p.add_argument("--sampler", choices=["bag", "random"], default=None, help="override config")
    p.add_argument("--seed", type=int, default=None, help="override config")
    p.add_argument("--checkpoint-every", type=int, default=None, help="override config")
    p.add_argument("--max-passage-len", type=int, default=None, help="override config")
    p.add_argument("--checkpoint-dir", default=None, help="directory for periodic checkpoints")

    p = sub.add_parser(
        "rerank",
        help="rescore candidates with a trained checkpoint",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--docs", required=True, help="4-field docs TSV")
    p.add_argument("--queries", required=True, help="2-field queries TSV")
    p.add_argument("--index-dir", required=True, help="index directory")
    p.add_argument("--candidates", required=True, help="first-stage run file")
    p.add_argument("--run-out", required=True, help="output run file")
    p.add_argument("--seed", type=int, default=0, help="frozen passage-window seed")
    p.add_argument("--max-passage-len", type=int, default=512, help="passage window length")
    p.add_argument("--tag", default="noiserank", help="run tag written in column 6")
    p.add_argument("--threads", type=int, default=1, help="parallel query workers")

    p = sub.add_parser(
        "eval",
        help="MRR@k of a run file against qrels",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--run", required=True, help="run file to evaluate")
    p.add_argument("--qrels", required=True, help="TREC-style qrels file")
    p.add_argument("--k", type=int, default=100, help="candidate depth / evaluation cutoff")
    p.add_argument("--csv-out", default=None, help="per-query reciprocal ranks CSV")

    p = sub.add_parser(
        "experiment",
        help="full noise-robustness comparison: bag+group vs random sampling",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--seeds", type=int, default=5, help="number of training seeds per sampler")
    p.add_argument("--seed", type=int, default=0, help="base seed (corpus and first run)")
    p.add_argument("--epochs", type=int, default=ExperimentConfig.epochs, help="training epochs")
    p.add_argument("--learning-rate", type=float, default=ExperimentConfig.learning_rate, help="Adam learning rate")
    p.add_argument("--m-bags", type=int, default=ExperimentConfig.m_bags, help="rank-interval bags per query")
    p.add_argument("--group-size", type=int, default=ExperimentConfig.group_size, help="members sampled per bag")
    p.add_argument("--k", type=int, default=ExperimentConfig.top_k, help="candidate depth / evaluation cutoff")
    p.add_argument("--lambda-group", type=float, default=ExperimentConfig.lambda_group, help="group-loss weight")
    p.add_argument("--dev-fraction", type=float, default=ExperimentConfig.dev_fraction, help="held-out dev query fraction")
    p.add_argument("--threads", type=int, default=1, help="parallel query workers")
    _add_corpus_flags(p)

    p = sub.add_parser(
        "grad-check",
        help="finite-difference verification of the analytic gradients",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--seed", type=int, default=1, help="random seed")
    p.add_argument("--epsilon", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--lambda-group", type=float, default=1.0, help="group-loss weight")
    p.add_argument("--tolerance", type=float, default=1e-4, help="pass threshold for the max relative error")

    return parser


def _cmd_gen_corpus(args: argparse.Namespace) -> int:
    cfg = _corpus_config(args)
    store, queries, qrels, hidden = generate_synthetic(cfg, args.seed)
    paths = write_corpus(args.out_dir, store, queries, qrels, hidden)
    print(
        f"wrote {len(store)} documents, {len(queries)} queries, {len(qrels)} qrels pairs, "
        f"{len(hidden)} hidden positives to {args.out_dir}"
    )
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def _cmd_index(args: argparse.Namespace) -> int:
    store = load_documents(args.docs)
    index = build_index(store)
    save_index(index, args.index_dir)
    print(
        f"indexed {index.doc_count} documents, {len(index.vocabulary)} terms, "
        f"avg length {index.avg_doc_length:.2f} -> {args.index_dir}"
    )
    return 0


def _cmd_retrieve(args: argparse.Namespace) -> int:
    index = load_index(args.index_dir)
    queries = load_queries(args.queries)
    candidates = retrieve_all(index, queries, args.k, threads=args.threads)
    write_run(candidates_to_run(candidates, tag=args.tag), args.run_out)
    sizes = [len(c) for c in candidates.values()]
    print(
        f"retrieved top-{args.k} for {len(candidates)} queries "
        f"(min {min(sizes)}, max {max(sizes)} candidates) -> {args.run_out}"
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    base = TrainConfig()
    if args.config:
        base = config_from_mapping(parse_config_file(args.config), base)
    overrides = {
        field: getattr(args, flag)
        for flag, field in _TRAIN_OVERRIDES.items()
        if getattr(args, flag) is not None
    }
    cfg = dataclasses.replace(base, **overrides)
    cfg.validate()

    store = load_documents(args.docs)
    queries = load_queries(args.queries)
    qrels = load_qrels(args.qrels, store)
    index = load_index(args.index_dir)
    candidates = run_to_candidates(read_run(args.candidates))

    dev_ids: list[str] = []
    if args.dev_fraction > 0:
        _, dev_ids = split_dev(queries.query_ids(), args.dev_fraction, cfg.seed)
    result = train(
        store,
        queries,
        qrels,
        candidates,
        index.vocabulary,
        cfg,
        dev_query_ids=dev_ids,
        checkpoint_dir=args.checkpoint_dir,
    )
    save_checkpoint(result.params, args.checkpoint_out)
    if args.history_out:
        write_history(result.history, args.history_out)
        from .report import plot_history

        plot_history({"train": result.history}, Path(args.history_out).with_suffix(".png"))
    last = result.history[-1]
    best = f", best dev MRR at epoch {result.best_epoch}" if result.best_epoch else ""
    print(
        f"trained {cfg.epochs} epochs (final mean loss {last.mean_total:.4f}, "
        f"skipped {last.skipped_queries} queries{best}) -> {args.checkpoint_out}"
    )
    return 0


def _cmd_rerank(args: argparse.Namespace) -> int:
    params = load_checkpoint(args.checkpoint)
    store = load_documents(args.docs)
    queries = load_queries(args.queries)
    index = load_index(args.index_dir)
    candidates = run_to_candidates(read_run(args.candidates))
    run = rerank(
        params,
        candidates,
        store,
        queries,
        index.vocabulary,
        seed=args.seed,
        max_passage_len=args.max_passage_len,
        tag=args.tag,
        threads=args.threads,
    )
    write_run(run, args.run_out)
    print(f"reranked {len(run.per_query)} queries -> {args.run_out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    run = read_run(args.run)
    qrels = load_qrels(args.qrels)
    report = mrr_at_k(run, qrels, args.k)
    print(report_text(report))
    if args.csv_out:
        write_metric_csv(report, args.csv_out)
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(
        seeds=args.seeds,
        seed=args.seed,
        dev_fraction=args.dev_fraction,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        m_bags=args.m_bags,
        group_size=args.group_size,
        top_k=args.k,
        lambda_group=args.lambda_group,
        threads=args.threads,
        corpus=_corpus_config(args),
    )
    result = run_experiment(cfg, args.out_dir)
    print((result.out_dir / "summary.txt").read_text(encoding="utf-8"), end="")
    return 0


def _cmd_grad_check(args: argparse.Namespace) -> int:
    error = gradient_check_toy(args.seed, args.epsilon, args.lambda_group)
    print(f"max relative gradient error: {error:.3e} (tolerance {args.tolerance:g})")
    return 0 if error < args.tolerance else 1


_COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "index": _cmd_index,
    "retrieve": _cmd_retrieve,
    "train": _cmd_train,
    "rerank": _cmd_rerank,
    "eval": _cmd_eval,
    "experiment": _cmd_experiment,
    "grad-check": _cmd_grad_check,
}


def run(argv: list[str] | None = None) -> int:
    """Parse argv and run the subcommand, returning the process exit code."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"noiserank {args.command}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # unexpected failure
        log.exception("unhandled error in %s", args.command)
        print(f"noiserank {args.command}: unexpected failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
