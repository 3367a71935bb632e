import numpy as np
import pytest

from noiserank.model import (
    CorpusEncoder,
    ModelConfig,
    ScorerParams,
    encode_pair,
    group_encode,
    group_score,
    init_params,
    load_checkpoint,
    save_checkpoint,
    score_document,
    score_from_repr,
)
from noiserank.passages import split_passages

CFG = ModelConfig(vocab_size=20, emb_dim=8, hidden_dim=6, num_filters=4, filter_width=2)


def tiny_params(vocab_size=6, emb_dim=1, hidden_dim=1) -> ScorerParams:
    """Scalar pipeline: score(pair) = tanh(mean of embedding values)."""
    return ScorerParams(
        embedding_table=np.zeros((vocab_size, emb_dim)),
        ffn_weight=np.ones((emb_dim, hidden_dim)),
        ffn_bias=np.zeros(hidden_dim),
        projection_v=np.ones(hidden_dim),
        conv_filters=np.ones((1, hidden_dim, 1)),
        conv_bias=np.zeros(1),
        group_projection_u=np.ones(1),
    )


def test_init_deterministic_and_biases_zero():
    a = init_params(CFG, seed=3)
    b = init_params(CFG, seed=3)
    c = init_params(CFG, seed=4)
    for name, arr in a.tensors().items():
        assert np.array_equal(arr, getattr(b, name))
    assert np.all(a.ffn_bias == 0.0) and np.all(a.conv_bias == 0.0)
    assert any(not np.array_equal(arr, getattr(c, name)) for name, arr in a.tensors().items())
    bound = 1.0 / np.sqrt(CFG.emb_dim)
    assert np.all(np.abs(a.embedding_table) <= bound)


def test_model_config_rejects_bad_dims():
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=10, emb_dim=0)


def test_encode_pair_zero_embeddings_give_tanh_bias():
    params = init_params(CFG, seed=0)
    params.embedding_table[:] = 0.0
    r = encode_pair(params, [1, 2], [3])
    assert np.allclose(r, np.tanh(params.ffn_bias))


def test_encode_pair_order_invariant():
    params = init_params(CFG, seed=1)
    a = encode_pair(params, [1, 2, 3], [4, 5, 6, 4])
    b = encode_pair(params, [3, 2, 1], [4, 4, 6, 5])
    assert np.array_equal(a, b)


def test_encode_pair_hand_computed():
    # 2-dim toy, identity-like ffn: r = tanh(mean of [q, SEP, p] embeddings).
    params = ScorerParams(
        embedding_table=np.array([[0.3, -0.2], [0.6, 0.9], [0.0, 0.0], [-0.3, 0.1]]),
        ffn_weight=np.eye(2),
        ffn_bias=np.array([0.1, -0.1]),
        projection_v=np.ones(2),
        conv_filters=np.ones((1, 2, 1)),
        conv_bias=np.zeros(1),
        group_projection_u=np.ones(1),
    )
    # vocab_size 4 -> SEP id 2 (zero row), UNK id 3.
    r = encode_pair(params, [0], [1])
    mean = (np.array([0.3, -0.2]) + np.array([0.0, 0.0]) + np.array([0.6, 0.9])) / 3.0
    assert np.allclose(r, np.tanh(mean + params.ffn_bias), atol=1e-15)


def test_encode_pair_rejects_both_empty():
    params = init_params(CFG, seed=0)
    with pytest.raises(ValueError, match="both sequences empty"):
        encode_pair(params, [], [])


def test_encode_pair_output_in_tanh_range():
    params = init_params(CFG, seed=2)
    r = encode_pair(params, [0, 1, 2], [3, 4])
    assert np.all(r > -1.0) and np.all(r < 1.0)


def test_score_from_repr_linear():
    params = init_params(CFG, seed=0)
    r1 = np.linspace(-0.5, 0.5, CFG.hidden_dim)
    r2 = np.linspace(0.2, -0.3, CFG.hidden_dim)
    assert score_from_repr(params, np.zeros(CFG.hidden_dim)) == 0.0
    s12 = score_from_repr(params, r1 + r2)
    assert abs(s12 - score_from_repr(params, r1) - score_from_repr(params, r2)) < 1e-12
    params.projection_v[:] = 0.0
    params.projection_v[0] = 1.0
    assert score_from_repr(params, r1) == r1[0]


def test_score_document_identical_passages_tie_to_head():
    params = init_params(CFG, seed=5)
    pset = split_passages(np.array([1, 2, 3]), max_passage_len=10, seed=0)
    result = score_document(params, [0, 1], pset)
    assert result.argmax_passage == 0
    assert np.all(result.passage_scores == result.passage_scores[0])


def test_score_document_picks_max_passage():
    # Scalar model: embedding values [0.1, 0.9, 0.3, 0.2] for tokens 0..3.
    params = tiny_params()
    params.embedding_table[:4, 0] = [0.1, 0.9, 0.3, 0.2]
    tokens = np.array([0, 1, 2, 3])
    pset = split_passages(tokens, max_passage_len=1, seed=0, doc_id="D")
    # head=[0], tail=[3]; middles drawn from the interior {1, 2}.
    result = score_document(params, [], pset)
    expected = [np.tanh(params.embedding_table[t, 0] / 2.0) for t in tokens]
    assert result.passage_scores[0] == pytest.approx(expected[0])
    assert result.passage_scores[3] == pytest.approx(expected[3])
    assert result.doc_score == max(result.passage_scores)
    middle_tokens = {int(pset.middle_1[0]), int(pset.middle_2[0])}
    if 1 in middle_tokens:
        assert result.doc_score == pytest.approx(np.tanh(0.45))


def test_score_document_invariant_under_middle_swap():
    params = init_params(CFG, seed=6)
    tokens = np.arange(12) % CFG.vocab_size
    pset = split_passages(tokens, max_passage_len=3, seed=1, doc_id="D")
    swapped = type(pset)(
        head=pset.head,
        middle_1=pset.middle_2,
        middle_2=pset.middle_1,
        tail=pset.tail,
        offsets=(pset.offsets[0], pset.offsets[2], pset.offsets[1], pset.offsets[3]),
    )
    assert score_document(params, [0], pset).doc_score == score_document(params, [0], swapped).doc_score


def test_scaling_projection_preserves_argmax():
    params = init_params(CFG, seed=7)
    tokens = np.arange(15) % CFG.vocab_size
    pset = split_passages(tokens, max_passage_len=3, seed=2, doc_id="D")
    base = score_document(params, [1, 2], pset)
    params.projection_v *= 3.5
    scaled = score_document(params, [1, 2], pset)
    assert scaled.argmax_passage == base.argmax_passage
    assert np.allclose(scaled.passage_scores, 3.5 * base.passage_scores)


def test_group_encode_zero_filters_yield_bias():
    params = init_params(CFG, seed=8)
    params.conv_filters[:] = 0.0
    params.conv_bias[:] = np.arange(CFG.num_filters, dtype=float)
    reps = [np.full(CFG.hidden_dim, 0.3), np.full(CFG.hidden_dim, -0.1), np.ones(CFG.hidden_dim)]
    assert np.array_equal(group_encode(params, reps), params.conv_bias)


def test_group_encode_width_one_picks_max_component():
    params = ScorerParams(
        embedding_table=np.zeros((4, 3)),
        ffn_weight=np.zeros((3, 3)),
        ffn_bias=np.zeros(3),
        projection_v=np.zeros(3),
        conv_filters=np.array([[[1.0], [0.0], [0.0]]]),  # one filter reading component 0
        conv_bias=np.zeros(1),
        group_projection_u=np.ones(1),
    )
    reps = [np.array([0.2, 9.0, 9.0]), np.array([0.7, -9.0, 0.0]), np.array([-0.5, 0.0, 0.0])]
    feature = group_encode(params, reps)
    assert feature[0] == pytest.approx(0.7)
    # Width 1 makes the feature invariant to member order.
    assert group_encode(params, reps[::-1])[0] == pytest.approx(0.7)


def test_group_encode_single_window_matches_direct_sum():
    params = init_params(CFG, seed=9)
    rng = np.random.default_rng(0)
    reps = [rng.uniform(-1, 1, CFG.hidden_dim) for _ in range(CFG.filter_width)]
    rep_matrix = np.stack(reps, axis=1)
    manual = np.tensordot(params.conv_filters, rep_matrix, axes=([1, 2], [0, 1])) + params.conv_bias
    assert np.allclose(group_encode(params, reps), manual)


def test_group_encode_symmetric_filter_commutes_within_window():
    # With width-symmetric filters the single-window sum is member-order free.
    params = init_params(CFG, seed=9)
    params.conv_filters[:] = params.conv_filters[:, :, :1]
    rng = np.random.default_rng(1)
    reps = [rng.uniform(-1, 1, CFG.hidden_dim) for _ in range(CFG.filter_width)]
    assert np.allclose(group_encode(params, reps), group_encode(params, reps[::-1]))


def test_group_encode_rejects_small_group():
    params = init_params(CFG, seed=0)
    with pytest.raises(ValueError, match="smaller than filter width"):
        group_encode(params, [np.zeros(CFG.hidden_dim)])


def test_group_score_linear():
    params = init_params(CFG, seed=1)
    gf = np.linspace(-1, 1, CFG.num_filters)
    assert group_score(params, np.zeros(CFG.num_filters)) == 0.0
    params.group_projection_u[:] = 0.0
    params.group_projection_u[0] = 1.0
    assert group_score(params, gf) == gf[0]


def test_checkpoint_round_trip(tmp_path):
    params = init_params(CFG, seed=12)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    for name, arr in params.tensors().items():
        assert np.array_equal(arr, getattr(loaded, name))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"notamagicstring" + b"\x00" * 64)
    with pytest.raises(ValueError, match="not a noiserank checkpoint"):
        load_checkpoint(path)
    good = init_params(CFG, seed=0)
    save_checkpoint(good, path)
    data = path.read_bytes()
    path.write_bytes(data[:-16])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_corpus_encoder_maps_oov_to_unk(tiny_corpus):
    store, queries, qrels, hidden, index, candidates = tiny_corpus
    encoder = CorpusEncoder(store, index.vocabulary, max_passage_len=16, passage_seed=0)
    from noiserank.corpus import Query

    ids = encoder.query_token_ids(Query("qx", "zzzunseen w00000"))
    assert ids[0] == encoder.unk_id
    assert ids[1] == index.vocabulary.id_of("w00000")
