"""Training loop: per-query batches, Adam updates, dev-set MRR tracking, history log."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DocumentStore, Qrels, QuerySet
from .evaluation import mrr_at_k, rerank
from .loss import GradientSet, batch_loss
from .model import CorpusEncoder, ModelConfig, ScorerParams, init_params, save_checkpoint
from .retrieval import CandidateList, Vocabulary
from .sampling import build_batch, build_batch_random

log = logging.getLogger("noiserank.training")

SAMPLERS = ("bag", "random")

HISTORY_HEADER = "epoch,mean_total,mean_lce_individual,mean_lce_group,dev_mrr,skipped_queries"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    lambda_group: float = 1.0
    m_bags: int = 10
    group_size: int = 4
    top_k: int = 100
    sampler: str = "bag"
    seed: int = 0
    checkpoint_every: int = 0
    max_passage_len: int = 512

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ValueError("adam betas must lie in [0, 1)")
        if self.adam_epsilon <= 0:
            raise ValueError("adam_epsilon must be positive")
        if self.m_bags < 1:
            raise ValueError(f"m_bags must be >= 1, got {self.m_bags}")
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.max_passage_len < 1:
            raise ValueError("max_passage_len must be >= 1")


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


def config_from_mapping(values: dict[str, str], base: TrainConfig | None = None) -> TrainConfig:
    """Build a TrainConfig from string values, type-checked against the fields."""
    base = base or TrainConfig()
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    updates: dict[str, object] = {}
    for key, value in values.items():
        spec = fields.get(key)
        if spec is None:
            raise ValueError(f"unknown config key {key!r}")
        if spec.type in ("int", int):
            updates[key] = int(value)
        elif spec.type in ("float", float):
            updates[key] = float(value)
        else:
            updates[key] = value
    cfg = dataclasses.replace(base, **updates)
    cfg.validate()
    return cfg


@dataclass
class AdamState:
    mean: GradientSet
    var: GradientSet
    step: int = 0

    @classmethod
    def for_params(cls, params: ScorerParams) -> "AdamState":
        return cls(mean=GradientSet.zeros_like(params), var=GradientSet.zeros_like(params))


def adam_step(
    params: ScorerParams, grads: GradientSet, state: AdamState, cfg: TrainConfig
) -> tuple[ScorerParams, AdamState]:
    """Standard Adam with bias correction; updates params and state in place."""
    for name, grad in grads.tensors().items():
        if not np.isfinite(grad).all():
            raise ValueError(f"non-finite gradient in {name}")
    state.step += 1
    t = state.step
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, grad in grads.tensors().items():
        m = getattr(state.mean, name)
        v = getattr(state.var, name)
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        getattr(params, name)[...] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon)
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    mean_total: float
    mean_lce_individual: float
    mean_lce_group: float
    dev_mrr: float | None
    skipped_queries: int


@dataclass
class TrainResult:
    params: ScorerParams
    history: list[EpochRecord]
    best_epoch: int | None
    skipped_queries: int


def write_history(history: Sequence[EpochRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for rec in history:
            dev = f"{rec.dev_mrr:.6f}" if rec.dev_mrr is not None else ""
            fh.write(
                f"{rec.epoch},{rec.mean_total:.6f},{rec.mean_lce_individual:.6f},"
                f"{rec.mean_lce_group:.6f},{dev},{rec.skipped_queries}\n"
            )


def _query_seed(seed: int, epoch_index: int, query_id: str) -> int:
    digest = hashlib.blake2b(
        f"{seed}:{epoch_index}:{query_id}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def train(
    store: DocumentStore,
    queries: QuerySet,
    qrels: Qrels,
    candidates: dict[str, CandidateList],
    vocabulary: Vocabulary,
    cfg: TrainConfig,
    dev_query_ids: Sequence[str] | None = None,
    model_cfg: ModelConfig | None = None,
    checkpoint_dir: str | Path | None = None,
) -> TrainResult:
    """Train the scorer: one batch per eligible query per epoch, one Adam step per batch.

    Returns the best-dev-MRR parameters when a dev set is given, otherwise the
    final parameters. Training-epoch passage windows are re-drawn each epoch
    (seed + epoch index); dev evaluation uses the frozen seed-0 layout.
    """
    cfg.validate()
    if model_cfg is None:
        model_cfg = ModelConfig(vocab_size=len(vocabulary) + 2)
    if model_cfg.vocab_size != len(vocabulary) + 2:
        raise ValueError(
            f"model vocab_size {model_cfg.vocab_size} must equal index terms + 2 specials "
            f"({len(vocabulary) + 2})"
        )
    if model_cfg.filter_width > cfg.group_size:
        raise ValueError(
            f"filter_width {model_cfg.filter_width} exceeds group_size {cfg.group_size}"
        )

    dev_set = set(dev_query_ids or ())
    train_qids = [qid for qid in queries.query_ids() if qid not in dev_set]
    if not train_qids:
        raise ValueError("no training queries left after removing the dev set")
    dev_queries = [queries[qid] for qid in queries.query_ids() if qid in dev_set]
    dev_candidates = {qid: candidates[qid] for qid in dev_set if qid in candidates}

    params = init_params(model_cfg, cfg.seed)
    state = AdamState.for_params(params)
    dev_encoder = CorpusEncoder(store, vocabulary, cfg.max_passage_len, cfg.seed)

    history: list[EpochRecord] = []
    best_params: ScorerParams | None = None
    best_mrr = -1.0
    best_epoch: int | None = None
    total_steps = 0
    skipped_last = 0

    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    for epoch_index in range(cfg.epochs):
        encoder = CorpusEncoder(store, vocabulary, cfg.max_passage_len, cfg.seed + epoch_index)
        order = [
            train_qids[i]
            for i in np.random.default_rng([cfg.seed, epoch_index]).permutation(len(train_qids))
        ]
        sums = np.zeros(3)
        processed = 0
        skipped = 0
        for qid in order:
            clist = candidates.get(qid)
            if clist is None or len(clist) == 0:
                skipped += 1
                continue
            seed = _query_seed(cfg.seed, epoch_index, qid)
            if cfg.sampler == "bag":
                batch = build_batch(
                    clist, qrels, min(cfg.m_bags, len(clist)), cfg.group_size, seed
                )
            else:
                batch = build_batch_random(clist, qrels, cfg.group_size, seed)
            if batch is None:
                skipped += 1
                continue
            breakdown, grads = batch_loss(params, batch, queries[qid], encoder, cfg.lambda_group)
            adam_step(params, grads, state, cfg)
            sums += (breakdown.total, breakdown.lce_individual, breakdown.lce_group)
            processed += 1
            total_steps += 1
            if (
                checkpoint_dir is not None
                and cfg.checkpoint_every > 0
                and total_steps % cfg.checkpoint_every == 0
            ):
                save_checkpoint(params, Path(checkpoint_dir) / f"step{total_steps:06d}.ckpt")
        if processed == 0:
            raise ValueError(
                "zero eligible queries: no labeled positive found inside any candidate list"
            )
        dev_mrr: float | None = None
        if dev_queries:
            run = rerank(
                params,
                dev_candidates,
                store,
                dev_queries,
                vocabulary,
                seed=cfg.seed,
                max_passage_len=cfg.max_passage_len,
                encoder=dev_encoder,
            )
            dev_mrr = mrr_at_k(run, qrels, cfg.top_k).mrr
            if dev_mrr > best_mrr:
                best_mrr = dev_mrr
                best_params = params.copy()
                best_epoch = epoch_index + 1
        history.append(
            EpochRecord(
                epoch=epoch_index + 1,
                mean_total=float(sums[0] / processed),
                mean_lce_individual=float(sums[1] / processed),
                mean_lce_group=float(sums[2] / processed),
                dev_mrr=dev_mrr,
                skipped_queries=skipped,
            )
        )
        skipped_last = skipped
        log.info(
            "epoch %d: mean_total=%.4f dev_mrr=%s skipped=%d",
            epoch_index + 1,
            history[-1].mean_total,
            f"{dev_mrr:.4f}" if dev_mrr is not None else "n/a",
            skipped,
        )

    final = best_params if best_params is not None else params.copy()
    return TrainResult(
        params=final, history=history, best_epoch=best_epoch, skipped_queries=skipped_last
    )
