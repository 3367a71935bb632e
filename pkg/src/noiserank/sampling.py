"""Training-batch construction: rank-interval bags over the candidate list, with
per-bag group sampling, plus the uniform-negative baseline sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Qrels
from .retrieval import CandidateEntry, CandidateList


@dataclass
class BagPartition:
    """Contiguous rank intervals covering ranks 1..N exactly once."""

    query_id: str
    bags: list[list[CandidateEntry]]


@dataclass
class Group:
    query_id: str
    member_doc_ids: list[str]
    positive_index: int | None
    source_bag: int


@dataclass
class TrainingBatch:
    query_id: str
    groups: list[Group]
    rng_seed: int | None

    @property
    def positive_group(self) -> int:
        for i, group in enumerate(self.groups):
            if group.positive_index is not None:
                return i
        raise ValueError(f"batch for {self.query_id!r} has no positive group")


def build_bags(candidates: CandidateList, num_bags: int) -> BagPartition:
    """Split the candidate list into num_bags contiguous rank intervals.

    The first (N mod M) bags get ceil(N/M) entries, the rest floor(N/M).
    """
    n = len(candidates.entries)
    if num_bags < 1:
        raise ValueError(f"number of bags must be >= 1, got {num_bags}")
    if num_bags > n:
        raise ValueError(f"cannot split {n} candidates into {num_bags} bags")
    base, remainder = divmod(n, num_bags)
    bags: list[list[CandidateEntry]] = []
    start = 0
    for j in range(num_bags):
        size = base + (1 if j < remainder else 0)
        bags.append(candidates.entries[start : start + size])
        start += size
    return BagPartition(query_id=candidates.query_id, bags=bags)


def _as_rng(rng: int | np.random.Generator) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), int(rng)


def sample_group(
    bag: list[CandidateEntry],
    size: int,
    rng: int | np.random.Generator,
    force_include: str | None = None,
    query_id: str = "",
    source_bag: int = 0,
) -> Group:
    """Draw `size` distinct members uniformly from one bag.

    When force_include is given that document is always selected and placed
    at index 0 (positive_index = 0); the remaining members keep rank order.
    """
    generator, _ = _as_rng(rng)
    if size > len(bag):
        raise ValueError(f"cannot sample {size} members from a bag of {len(bag)}")
    if force_include is not None:
        rest = [e for e in bag if e.doc_id != force_include]
        if len(rest) == len(bag):
            raise ValueError(f"forced document {force_include!r} is not in the bag")
        picked = generator.choice(len(rest), size=size - 1, replace=False)
        members = [force_include] + [rest[i].doc_id for i in sorted(picked)]
        return Group(query_id, members, positive_index=0, source_bag=source_bag)
    picked = generator.choice(len(bag), size=size, replace=False)
    members = [bag[i].doc_id for i in sorted(picked)]
    return Group(query_id, members, positive_index=None, source_bag=source_bag)


def _labeled_in_candidates(candidates: CandidateList, qrels: Qrels) -> list[CandidateEntry]:
    positives = qrels.positives(candidates.query_id)
    return [e for e in candidates.entries if e.doc_id in positives]


def build_batch(
    candidates: CandidateList,
    qrels: Qrels,
    num_bags: int,
    group_size: int,
    rng: int | np.random.Generator,
) -> TrainingBatch | None:
    """One group per bag; the labeled positive sits at index 0 of its bag's group.

    Returns None when the query must be skipped: no labeled positive inside
    the candidates, or the positive's bag cannot form a group of at least 2.
    Bags other than the positive's that cannot reach 2 members are dropped;
    bags smaller than group_size contribute a group of their full usable size.
    Labeled positives other than the chosen one never enter negative draws.
    """
    labeled = _labeled_in_candidates(candidates, qrels)
    if not labeled:
        return None
    chosen = labeled[0]  # best-ranked labeled positive
    other_positive_ids = {e.doc_id for e in labeled[1:]}
    generator, seed = _as_rng(rng)
    partition = build_bags(candidates, num_bags)

    groups: list[Group] = []
    for j, bag in enumerate(partition.bags):
        usable = [e for e in bag if e.doc_id not in other_positive_ids]
        has_positive = any(e.doc_id == chosen.doc_id for e in usable)
        size = min(group_size, len(usable))
        if size < 2:
            if has_positive:
                return None  # positive cannot be contrasted within its bag
            continue
        if has_positive:
            group = sample_group(
                usable,
                size,
                generator,
                force_include=chosen.doc_id,
                query_id=candidates.query_id,
                source_bag=j,
            )
        else:
            group = sample_group(
                usable, size, generator, query_id=candidates.query_id, source_bag=j
            )
        groups.append(group)
    return TrainingBatch(query_id=candidates.query_id, groups=groups, rng_seed=seed)


def build_batch_random(
    candidates: CandidateList,
    qrels: Qrels,
    group_size: int,
    rng: int | np.random.Generator,
) -> TrainingBatch | None:
    """Baseline sampler: one group of the positive plus uniform negatives."""
    labeled = _labeled_in_candidates(candidates, qrels)
    if not labeled:
        return None
    chosen = labeled[0]
    positive_ids = {e.doc_id for e in labeled}
    pool = [e for e in candidates.entries if e.doc_id not in positive_ids]
    size = min(group_size, len(pool) + 1)
    if size < 2:
        return None
    generator, seed = _as_rng(rng)
    picked = generator.choice(len(pool), size=size - 1, replace=False)
    members = [chosen.doc_id] + [pool[i].doc_id for i in sorted(picked)]
    group = Group(candidates.query_id, members, positive_index=0, source_bag=0)
    return TrainingBatch(query_id=candidates.query_id, groups=[group], rng_seed=seed)
