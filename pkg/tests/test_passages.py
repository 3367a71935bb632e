import numpy as np
import pytest

from noiserank.passages import split_passages


def test_long_document_layout():
    tokens = np.arange(2048)
    pset = split_passages(tokens, max_passage_len=512, seed=0, doc_id="D1")
    assert pset.offsets[0] == (0, 512)
    assert pset.offsets[3] == (1536, 2048)
    for start, end in pset.offsets[1:3]:
        assert end - start == 512
        assert 512 <= start and end <= 1536


def test_short_document_collapses_to_whole():
    tokens = np.arange(300)
    pset = split_passages(tokens, max_passage_len=512, seed=0)
    assert pset.offsets == ((0, 300),) * 4
    for passage in pset.passages():
        assert np.array_equal(passage, tokens)


def test_empty_interior_uses_head_and_tail():
    tokens = np.arange(1024)
    pset = split_passages(tokens, max_passage_len=512, seed=0)
    assert pset.offsets[1] == (0, 512)
    assert pset.offsets[2] == (512, 1024)


def test_small_interior_becomes_both_middles():
    tokens = np.arange(1025)
    pset = split_passages(tokens, max_passage_len=512, seed=0)
    assert pset.offsets[1] == pset.offsets[2] == (512, 513)


def test_deterministic_and_seed_only_moves_middles():
    tokens = np.arange(3000)
    a = split_passages(tokens, 512, seed=1, doc_id="D7")
    b = split_passages(tokens, 512, seed=1, doc_id="D7")
    c = split_passages(tokens, 512, seed=2, doc_id="D7")
    assert a.offsets == b.offsets
    assert a.offsets[0] == c.offsets[0] and a.offsets[3] == c.offsets[3]


def test_doc_id_decorrelates_middles():
    tokens = np.arange(5000)
    offsets = {split_passages(tokens, 512, seed=1, doc_id=f"D{i}").offsets[1] for i in range(8)}
    assert len(offsets) > 1


def test_passages_are_contiguous_slices():
    rng = np.random.default_rng(3)
    for _ in range(100):
        length = int(rng.integers(1, 1500))
        mpl = int(rng.choice([1, 3, 17, 64, 512]))
        tokens = rng.integers(0, 50, size=length)
        pset = split_passages(tokens, mpl, seed=5, doc_id="X")
        for passage, (start, end) in zip(pset.passages(), pset.offsets):
            assert np.array_equal(passage, tokens[start:end])
            assert 1 <= end - start <= mpl or length <= mpl
        assert pset.offsets[0][0] == 0
        assert pset.offsets[3][1] == length


def test_errors():
    with pytest.raises(ValueError, match="empty"):
        split_passages(np.array([], dtype=np.int64), 8, seed=0)
    with pytest.raises(ValueError, match="max_passage_len"):
        split_passages(np.arange(5), 0, seed=0)
