import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualpointer.autodiff import Tensor
from dualpointer.data import CorpusError, Entity, Example, Triple, UNK_ID, build_vocabs
from dualpointer.diagnostics import check_model
from dualpointer.model import (
    BOTH,
    FORWARD,
    INFERENCE,
    DecoderOutput,
    DualPointerNet,
    Hyperparams,
    RunMode,
    assemble_triples,
    context_to_entity_attention,
    decode,
    encode,
    encode_context,
    encode_entities,
    featurize,
    forward_only_ceiling,
    init_params,
    pointer_attention_multi,
    pointer_attention_single,
    relation_readout,
    self_mask,
)
from dualpointer.model.params import ParameterSet

FIG1 = Example(
    "Lee works at ABC Mart with his Father , its owner .".split(),
    [Entity(0, 1, "PER"), Entity(3, 5, "ORG"), Entity(6, 8, "PER")],
    [Triple(0, "Employed", 1), Triple(0, "Family", 2), Triple(2, "Owner", 1)],
)


def sentence(n_tokens, spans, types=None):
    tokens = [f"t{i % 7}x" for i in range(n_tokens)]
    types = types or ["PER"] * len(spans)
    return Example(tokens, [Entity(s, e, ty) for (s, e), ty in zip(spans, types)], []).validate()


def tiny_net(examples, attn="multi", seed=0, **hyper):
    vocab = build_vocabs(examples)
    return DualPointerNet.initialize(Hyperparams.tiny(**hyper), vocab, attn, seed=seed,
                                     dtype=np.float64)


# --- hyperparameters and parameters ------------------------------------------------

def test_default_hyperparameters():
    h = Hyperparams()
    assert (h.word_dim, h.char_dim, h.entity_type_dim) == (300, 50, 50)
    assert h.filter_counts == (34, 33, 33)
    assert (h.word_repr_dim, h.entity_repr_dim, h.context_dim, h.output_dim) == (400, 250, 512, 256)
    assert (h.heads, h.head_dim, h.dropout, h.alpha) == (8, 32, 0.1, 0.6)
    assert Hyperparams.from_json(h.to_json()) == h


@pytest.mark.parametrize("bad", [dict(heads=7), dict(head_dim=16), dict(dropout=1.0),
                                 dict(alpha=0.0), dict(decoder_hidden=500), dict(word_dim=0)])
def test_hyperparameter_validation(bad):
    with pytest.raises(ValueError):
        Hyperparams(**bad)


def test_init_params_layout():
    h = Hyperparams.tiny()
    multi = init_params(h, 10, 8, 2, 4, attn="multi")
    single = init_params(h, 10, 8, 2, 4, attn="single")
    assert multi["ctx_fwd.wx"].shape == (h.word_repr_dim, 4 * h.encoder_hidden)
    assert multi["obj.lstm.wx"].shape == (h.entity_repr_dim + h.encoder_hidden, 4 * h.decoder_hidden)
    assert multi["obj.wl"].shape == (h.decoder_hidden // h.heads, h.head_dim)
    assert multi["obj.wr"].shape == (h.output_dim, 4)
    assert "obj.v" in single and "obj.wl" not in single
    b = multi["ent_lstm.b"].data
    H = h.encoder_hidden
    np.testing.assert_array_equal(b[H:2 * H], 1.0)
    np.testing.assert_array_equal(b[:H], 0.0)
    np.testing.assert_array_equal(multi["word_emb"].data[0], 0.0)


def test_init_is_seeded():
    h = Hyperparams.tiny()
    a, b = init_params(h, 10, 8, 2, 4, seed=3), init_params(h, 10, 8, 2, 4, seed=3)
    c = init_params(h, 10, 8, 2, 4, seed=4)
    assert all(np.array_equal(a[n].data, b[n].data) for n in a)
    assert not np.array_equal(a["obj.wr"].data, c["obj.wr"].data)


def test_featurize_maps_unknowns():
    vocab = build_vocabs([FIG1])
    ex = Example(["Lee", "zzz"], [Entity(1, 2, "PER")], [])
    feats = featurize(ex, vocab)
    assert feats.word_ids[1] == UNK_ID and feats.ent_word_ids[0, 0] == UNK_ID
    with pytest.raises(CorpusError):
        featurize(Example(["a"], [Entity(0, 1, "GPE")], []), vocab)


# --- encoder --------------------------------------------------------------------

def test_encoder_shapes_at_default_size():
    net = DualPointerNet.initialize(Hyperparams(), build_vocabs([FIG1]))
    enc = encode(net.featurize(FIG1), net.params, net.hyper)
    assert enc.C.shape == (12, 512)
    assert enc.S.shape == (3, 256)
    assert enc.E.shape == (3, 250)
    assert enc.O.shape == (4, 256)
    assert enc.attention.shape == (8, 3, 12)


@settings(max_examples=15, deadline=None)
@given(L=st.integers(1, 9), m=st.integers(1, 4), seed=st.integers(0, 10))
def test_encoder_shapes_follow_hyperparameters(L, m, seed):
    rnd = np.random.default_rng(seed)
    starts = sorted(rnd.choice(L, size=min(m, L), replace=False))
    ex = sentence(L, [(int(s), int(s) + 1) for s in starts])
    net = tiny_net([ex], seed=seed)
    h = net.hyper
    enc = encode(net.featurize(ex), net.params, h)
    k = ex.n_entities
    assert enc.C.shape == (L, h.context_dim)
    assert enc.S.shape == (k, h.encoder_hidden)
    assert enc.E.shape == (k, h.entity_repr_dim)
    assert enc.O.shape == (k + 1, h.output_dim)
    w = enc.attention.data
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)


def test_single_token_context_attention_is_one():
    ex = sentence(1, [(0, 1)])
    net = tiny_net([ex])
    enc = encode(net.featurize(ex), net.params, net.hyper)
    np.testing.assert_array_equal(enc.attention.data, 1.0)


def test_encode_is_deterministic_at_inference():
    net = tiny_net([FIG1], dropout=0.5)
    feats = net.featurize(FIG1)
    a = encode(feats, net.params, net.hyper)
    b = encode(feats, net.params, net.hyper)
    np.testing.assert_array_equal(a.O.data, b.O.data)
    c = encode(feats, net.params, net.hyper, RunMode(True, np.random.default_rng(0)))
    assert not np.array_equal(a.C.data, c.C.data)


def test_token_outside_spans_changes_only_context():
    other = Example(list(FIG1.tokens), FIG1.entities, FIG1.triples)
    other.tokens[1] = "employs"
    net = tiny_net([FIG1, other])
    a = encode(net.featurize(FIG1), net.params, net.hyper)
    b = encode(net.featurize(other), net.params, net.hyper)
    np.testing.assert_array_equal(a.S.data, b.S.data)
    np.testing.assert_array_equal(a.E.data, b.E.data)
    assert not np.allclose(a.C.data, b.C.data)


def test_context_encoder_is_bidirectional(rng):
    h = Hyperparams.tiny()
    params = init_params(h, 5, 5, 1, 2, seed=1, dtype=np.float64)
    W = Tensor(rng.normal(size=(6, h.word_repr_dim)))
    C = encode_context(W, params, h).data
    # swapping the two directions' weights and reversing the input mirrors C
    swapped = ParameterSet({k: v.copy() for k, v in params.arrays().items()})
    for part in ("wx", "wh", "b"):
        swapped[f"ctx_fwd.{part}"].data[...] = params[f"ctx_bwd.{part}"].data
        swapped[f"ctx_bwd.{part}"].data[...] = params[f"ctx_fwd.{part}"].data
    C_rev = encode_context(Tensor(W.data[::-1].copy()), swapped, h).data
    H = h.encoder_hidden
    np.testing.assert_allclose(C_rev[::-1, :H], C[:, H:], atol=1e-12)
    np.testing.assert_allclose(C_rev[::-1, H:], C[:, :H], atol=1e-12)


def test_entity_encoder_reads_left_to_right(rng):
    h = Hyperparams.tiny()
    params = init_params(h, 5, 5, 1, 2, seed=2, dtype=np.float64)
    E = rng.normal(size=(4, h.entity_repr_dim))
    full = encode_entities(Tensor(E), params, h).data
    for k in range(1, 4):
        np.testing.assert_allclose(encode_entities(Tensor(E[:k]), params, h).data, full[:k],
                                   atol=1e-12)


def test_context_to_entity_output_is_rectified(rng):
    h = Hyperparams.tiny()
    params = init_params(h, 5, 5, 1, 2, seed=5, dtype=np.float64)
    C = Tensor(rng.normal(size=(5, h.context_dim)))
    S = Tensor(rng.normal(size=(3, h.encoder_hidden)))
    out, weights = context_to_entity_attention(C, S, params, h)
    assert out.shape == (3, h.output_dim) and np.all(out.data >= 0)
    assert weights.shape == (h.heads, 3, 5)


# --- decoder --------------------------------------------------------------------

def test_self_mask():
    mask = self_mask(3)
    assert mask.shape == (3, 4)
    assert mask[:, 0].all()
    assert not mask[0, 1] and not mask[1, 2] and not mask[2, 3]
    assert mask.sum() == 9


@pytest.mark.parametrize("attn", ["single", "multi"])
@pytest.mark.parametrize("direction", ["objects", "subjects"])
def test_single_entity_points_to_null(attn, direction):
    ex = sentence(4, [(1, 3)])
    net = tiny_net([ex], attn)
    enc = encode(net.featurize(ex), net.params, net.hyper)
    out = decode(enc, direction, attn, net.params, net.hyper)
    np.testing.assert_array_equal(out.attention.data, [[1.0, 0.0]])
    assert out.positions.tolist() == [0]
    assert len(net.predict(ex)) == 0


@settings(max_examples=20, deadline=None)
@given(attn=st.sampled_from(["single", "multi"]), m=st.integers(1, 5), seed=st.integers(0, 50))
def test_pointer_distributions_are_masked_probabilities(attn, m, seed):
    ex = sentence(m + 2, [(i, i + 1) for i in range(m)])
    net = tiny_net([ex], attn, seed=seed)
    enc = encode(net.featurize(ex), net.params, net.hyper)
    for direction in ("objects", "subjects"):
        out = decode(enc, direction, attn, net.params, net.hyper)
        a = out.attention.data
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(a >= 0)
        assert np.all(a[np.arange(m), np.arange(m) + 1] == 0.0)
        assert out.relation_logits.shape == (m, net.vocab.n_relations)
        if attn == "multi":
            heads = out.head_attention.data
            assert np.all(heads[:, np.arange(m), np.arange(m) + 1] == 0.0)
            np.testing.assert_allclose(heads.mean(axis=0), a, atol=1e-12)


def test_single_pointer_zero_v_is_uniform(rng):
    h = Hyperparams.tiny()
    params = init_params(h, 5, 5, 1, 3, attn="single", seed=0, dtype=np.float64)
    params["obj.v"].data[...] = 0.0
    O = Tensor(rng.normal(size=(4, h.output_dim)))
    G = Tensor(rng.normal(size=(3, h.decoder_hidden)))
    a, logits = pointer_attention_single(O, G, self_mask(3), params, "obj")
    np.testing.assert_allclose(a.data, np.where(self_mask(3), 1 / 3, 0.0), atol=1e-12)
    assert logits.shape == (3, 3)


def test_multi_pointer_identical_heads(rng):
    h = Hyperparams.tiny()
    params = init_params(h, 5, 5, 1, 3, attn="multi", seed=0, dtype=np.float64)
    O = Tensor(np.tile(rng.normal(size=(4, h.head_dim)), (1, h.heads)))
    G = Tensor(np.tile(rng.normal(size=(3, h.decoder_hidden // h.heads)), (1, h.heads)))
    a, _, heads = pointer_attention_multi(O, G, self_mask(3), params, "obj", h)
    for k in range(h.heads):
        np.testing.assert_allclose(heads.data[k], a.data, atol=1e-12)


def test_decode_rejects_unknown_direction():
    net = tiny_net([FIG1])
    enc = encode(net.featurize(FIG1), net.params, net.hyper)
    with pytest.raises(ValueError):
        decode(enc, "sideways", "multi", net.params, net.hyper)


def test_relation_readout():
    logits = np.array([[-1.0, 2.0, 0.5], [-3.0, -1.0, -2.0], [0.0, 0.0, -1.0]])
    assert relation_readout(logits, "single").tolist() == [1, 1, 0]
    # an all-negative row falls back to the raw logits
    assert relation_readout(logits, "multi").tolist() == [1, 1, 0]


# --- assembly -------------------------------------------------------------------

RELATIONS = ["NONE", "Employed", "Family", "Owner"]


def fake_output(direction, pointers, relations, sharp=8.0, attn="single"):
    """Decoder output whose argmaxes are the given slots and relation ids."""
    m = len(pointers)
    scores = np.zeros((m, m + 1))
    scores[np.arange(m), pointers] = sharp
    mask = self_mask(m)
    scores = np.where(mask, scores, -np.inf)
    a = np.exp(scores - scores.max(axis=1, keepdims=True))
    a /= a.sum(axis=1, keepdims=True)
    logits = np.zeros((m, len(RELATIONS)))
    logits[np.arange(m), relations] = sharp
    return DecoderOutput(direction, Tensor(a), Tensor(logits), None, attn)


def test_assemble_figure1_hand_trace():
    # forward: Lee -> ABC Mart (Employed), ABC Mart -> NULL, his Father -> ABC Mart (Owner)
    fwd = fake_output("objects", [2, 0, 2], [1, 0, 3])
    # backward: his Father's subject is Lee (Family)
    bwd = fake_output("subjects", [0, 0, 1], [0, 0, 2])
    out = assemble_triples(fwd, bwd, RELATIONS)
    assert out.as_set() == FIG1.triple_set()
    assert all(0 < t.confidence <= 1 for t in out)
    assert {t.source for t in out} == {"forward", "backward"}


def test_assemble_merges_identical_triples():
    fwd = fake_output("objects", [2, 0], [1, 0])
    bwd = fake_output("subjects", [0, 1], [0, 1])
    out = assemble_triples(fwd, bwd, RELATIONS)
    assert len(out) == 1 and out.triples[0].source == BOTH
    assert out.triples[0].key == (0, "Employed", 1)


def test_assemble_conflicting_relations():
    fwd = fake_output("objects", [2, 0], [1, 0], sharp=3.0)
    bwd = fake_output("subjects", [0, 1], [0, 2], sharp=6.0)
    assert assemble_triples(fwd, bwd, RELATIONS).as_set() == {(0, "Family", 1)}
    # equal confidence goes to the forward decoder
    bwd = fake_output("subjects", [0, 1], [0, 2], sharp=3.0)
    out = assemble_triples(fwd, bwd, RELATIONS)
    assert out.as_set() == {(0, "Employed", 1)} and out.triples[0].source == FORWARD


def test_assemble_all_null_is_empty():
    fwd = fake_output("objects", [0, 0, 0], [0, 0, 0])
    assert len(assemble_triples(fwd, fwd, RELATIONS)) == 0
    # a pointer with relation NONE contributes nothing either
    assert len(assemble_triples(fake_output("objects", [2, 0], [0, 0]), None, RELATIONS)) == 0


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_assembly_bounds(m, seed):
    rnd = np.random.default_rng(seed)
    outs = []
    for direction in ("objects", "subjects"):
        a = rnd.random((m, m + 1)) * self_mask(m)
        a /= a.sum(axis=1, keepdims=True)
        outs.append(DecoderOutput(direction, Tensor(a), Tensor(rnd.normal(size=(m, 4))), None,
                                  "multi"))
    triples = assemble_triples(outs[0], outs[1], RELATIONS)
    assert len(triples) <= 2 * m
    assert all(t.subject != t.object for t in triples)
    assert len(triples.as_set()) == len(triples)
    assert len({(t.subject, t.object) for t in triples}) == len(triples)
    assert all(np.isfinite(t.confidence) and 0 < t.confidence <= 1 for t in triples)


def test_forward_only_ceiling():
    assert forward_only_ceiling(FIG1) == pytest.approx(2 / 3)
    star = Example(list("abc"), [Entity(i, i + 1, "T") for i in range(3)],
                   [Triple(0, "r", 1), Triple(0, "r", 2)])
    assert forward_only_ceiling(star) == 0.5
    chain = Example(list("abc"), [Entity(i, i + 1, "T") for i in range(3)],
                    [Triple(0, "r", 1), Triple(1, "r", 2)])
    assert forward_only_ceiling(chain) == 1.0
    assert forward_only_ceiling(Example(["a"], [Entity(0, 1, "T")], [])) == 1.0


# --- full network ---------------------------------------------------------------

def test_predict_without_entities_is_empty():
    net = tiny_net([FIG1])
    assert len(net.predict(Example(["hello"], [], []))) == 0


def test_forward_only_network_skips_subject_decoder():
    net = tiny_net([FIG1])
    out = net.forward(FIG1, dual=False)
    assert out.subjects is None
    assert all(t.source == FORWARD for t in net.predict(FIG1, dual=False))


def test_training_passes_are_reproducible():
    from dualpointer.data import compute_pointer_targets
    from dualpointer.training import compute_loss

    grads = []
    for _ in range(2):
        net = tiny_net([FIG1], dropout=0.3)
        out = net.forward(FIG1, RunMode(True, np.random.default_rng(7)))
        loss = compute_loss(out.objects, out.subjects, compute_pointer_targets(FIG1), 0.6, net.vocab)
        loss.total.backward()
        grads.append((loss.value, {n: t.grad.copy() for n, t in net.params.items()}))
    assert grads[0][0] == grads[1][0]
    assert all(np.array_equal(grads[0][1][n], grads[1][1][n]) for n in grads[0][1])


@pytest.mark.parametrize("attn", ["single", "multi"])
def test_full_model_gradient(attn):
    result = check_model(attn, max_coords=15)
    assert result.passed, result.report.per_param
