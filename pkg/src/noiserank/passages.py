"""Four-passage decomposition of long documents: head, two random middles, tail."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PassageSet:
    """Four contiguous token windows plus their (start, end) offsets in the source.

    Degenerate lengths collapse deterministically: a document no longer than
    one passage yields the whole document four times; an interior shorter
    than one passage becomes both middles; an empty interior makes middle_1
    the head and middle_2 the tail.
    """

    head: np.ndarray
    middle_1: np.ndarray
    middle_2: np.ndarray
    tail: np.ndarray
    offsets: tuple[tuple[int, int], tuple[int, int], tuple[int, int], tuple[int, int]]

    def passages(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.head, self.middle_1, self.middle_2, self.tail


def _doc_stream(seed: int, doc_id: str) -> np.random.Generator:
    # Stable across platforms and runs, unlike hash().
    digest = hashlib.blake2b(doc_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "little")])


def split_passages(
    doc_tokens: np.ndarray | list[int],
    max_passage_len: int,
    seed: int,
    doc_id: str = "",
) -> PassageSet:
    """Split a token sequence into head / middle_1 / middle_2 / tail windows.

    Head is anchored at token 0 and tail at the last token. Middle windows of
    max_passage_len tokens start at positions drawn independently and
    uniformly from the interior; only those draws depend on (seed, doc_id).
    """
    tokens = np.asarray(doc_tokens)
    length = len(tokens)
    if length == 0:
        raise ValueError("cannot split an empty document")
    if max_passage_len < 1:
        raise ValueError(f"max_passage_len must be >= 1, got {max_passage_len}")

    if length <= max_passage_len:
        span = (0, length)
        spans = (span, span, span, span)
    else:
        head_span = (0, max_passage_len)
        tail_span = (length - max_passage_len, length)
        interior_len = length - 2 * max_passage_len
        if interior_len >= max_passage_len:
            rng = _doc_stream(seed, doc_id)
            starts = rng.integers(
                max_passage_len, length - 2 * max_passage_len + 1, size=2
            )
            spans = (
                head_span,
                (int(starts[0]), int(starts[0]) + max_passage_len),
                (int(starts[1]), int(starts[1]) + max_passage_len),
                tail_span,
            )
        elif interior_len > 0:
            interior = (max_passage_len, length - max_passage_len)
            spans = (head_span, interior, interior, tail_span)
        else:
            spans = (head_span, head_span, tail_span, tail_span)

    windows = tuple(tokens[start:end] for start, end in spans)
    return PassageSet(
        head=windows[0],
        middle_1=windows[1],
        middle_2=windows[2],
        tail=windows[3],
        offsets=spans,
    )
