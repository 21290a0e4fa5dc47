import math
import warnings

import numpy as np
import pytest

from dualpointer.autodiff import Tensor, default_dtype
from dualpointer.data import Entity, Example, Triple, build_vocabs, compute_pointer_targets, generate_synthetic
from dualpointer.model import DecoderOutput, DualPointerNet, Hyperparams, RunMode, self_mask
from dualpointer.model.params import ParameterSet
from dualpointer.training import (
    Adam,
    Checkpoint,
    CheckpointError,
    ConfigError,
    NumericError,
    TrainConfig,
    checkpoint_bytes,
    clip_grad_norm,
    compute_loss,
    default_config_text,
    format_config,
    history_csv,
    load_checkpoint,
    parse_checkpoint,
    parse_config,
    save_checkpoint,
    train,
)

FIG1 = Example(
    "Lee works at ABC Mart with his Father , its owner .".split(),
    [Entity(0, 1, "PER"), Entity(3, 5, "ORG"), Entity(6, 8, "PER")],
    [Triple(0, "Employed", 1), Triple(0, "Family", 2), Triple(2, "Owner", 1)],
)
VOCAB = build_vocabs([FIG1])


def model_outputs(seed=0, attn="multi"):
    net = DualPointerNet.initialize(Hyperparams.tiny(), VOCAB, attn, seed=seed, dtype=np.float64)
    return net.forward(FIG1), compute_pointer_targets(FIG1)


def uniform_output(direction, m, n_rel):
    a = self_mask(m) / m
    return DecoderOutput(direction, Tensor(a.astype(float)), Tensor(np.zeros((m, n_rel))))


# --- loss -----------------------------------------------------------------------

@pytest.fixture(autouse=True)
def float64_for_loss(request):
    if request.node.name.startswith(("test_loss", "test_alpha", "test_uniform", "test_perfect",
                                     "test_forward_only", "test_zero_mass")):
        with default_dtype(np.float64):
            yield
    else:
        yield


def test_loss_weighting_at_default_alpha():
    out, targets = model_outputs()
    loss = compute_loss(out.objects, out.subjects, targets, 0.6, VOCAB)
    expected = 0.3 * (loss.pos_sub + loss.pos_obj) + 0.2 * (loss.rel_sub + loss.rel_obj)
    assert loss.value == pytest.approx(expected, abs=1e-9)
    assert min(loss.pos_obj, loss.pos_sub, loss.rel_obj, loss.rel_sub) > 0


def test_alpha_rescales_position_component():
    out, targets = model_outputs(seed=1)
    a = compute_loss(out.objects, out.subjects, targets, 0.6, VOCAB)
    b = compute_loss(out.objects, out.subjects, targets, 0.8, VOCAB)
    pos_a = a.value - 0.2 * a.relation_part
    pos_b = b.value - 0.1 * b.relation_part
    assert pos_b / pos_a == pytest.approx(0.8 / 0.6, rel=1e-9)
    assert a.position_part == b.position_part


def test_uniform_model_closed_form():
    m, n_rel = FIG1.n_entities, VOCAB.n_relations
    targets = compute_pointer_targets(FIG1)
    fwd, bwd = uniform_output("objects", m, n_rel), uniform_output("subjects", m, n_rel)
    loss = compute_loss(fwd, bwd, targets, 0.6, VOCAB)
    # every entity has m unmasked slots: NULL plus the m - 1 others
    assert loss.value == pytest.approx(0.6 * math.log(m) + 0.4 * math.log(n_rel), abs=1e-12)


def test_perfect_predictions_have_zero_loss():
    targets = compute_pointer_targets(FIG1)
    m, n_rel = FIG1.n_entities, VOCAB.n_relations

    def perfect(direction, slots, rels):
        a = np.zeros((m, m + 1))
        a[np.arange(m), slots] = 1.0
        logits = np.full((m, n_rel), -40.0)
        logits[np.arange(m), [VOCAB.rel2id[r] for r in rels]] = 40.0
        return DecoderOutput(direction, Tensor(a), Tensor(logits))

    loss = compute_loss(perfect("objects", targets.obj_slots(), targets.obj_rel),
                        perfect("subjects", targets.sub_slots(), targets.sub_rel), targets, 0.6, VOCAB)
    assert loss.value == pytest.approx(0.0, abs=1e-6)


def test_forward_only_loss():
    out, targets = model_outputs()
    loss = compute_loss(out.objects, None, targets, 0.6, VOCAB)
    assert loss.value == pytest.approx(0.6 * loss.pos_obj + 0.4 * loss.rel_obj, abs=1e-12)
    assert loss.pos_sub == loss.rel_sub == 0.0


def test_zero_mass_target_is_clamped_with_warning(caplog):
    m, n_rel = 2, VOCAB.n_relations
    ex = Example(["a", "b"], [Entity(0, 1, "PER"), Entity(1, 2, "ORG")], [Triple(0, "Employed", 1)])
    targets = compute_pointer_targets(ex)
    a = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])  # entity 0 puts nothing on its object
    out = DecoderOutput("objects", Tensor(a), Tensor(np.zeros((m, n_rel))))
    loss = compute_loss(out, None, targets, 0.5, VOCAB)
    assert "zero attention mass" in caplog.text
    assert loss.pos_obj == pytest.approx(25.0)  # (50 + 0) / 2 entities


def test_loss_rejects_bad_alpha():
    out, targets = model_outputs()
    for alpha in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            compute_loss(out.objects, out.subjects, targets, alpha, VOCAB)


# --- optimizer ------------------------------------------------------------------

def single_param(value):
    ps = ParameterSet()
    ps.add("w", np.asarray(value, dtype=np.float64))
    return ps


def test_adam_first_step_moves_by_lr():
    ps = single_param([0.0, 5.0, -2.0])
    ps["w"].grad = np.ones(3)
    Adam(lr=1e-3).step(ps)
    np.testing.assert_allclose(ps["w"].data, [-1e-3, 5.0 - 1e-3, -2.0 - 1e-3], rtol=1e-6)
    assert ps["w"].grad is None


def test_adam_zero_gradient_keeps_parameters():
    ps = single_param([1.0, 2.0])
    ps["w"].grad = np.zeros(2)
    Adam().step(ps)
    np.testing.assert_array_equal(ps["w"].data, [1.0, 2.0])


def test_adam_minimizes_quadratic_bowl():
    target = np.array([0.3, -0.7, 0.2])
    ps = single_param(np.zeros(3))
    opt = Adam(lr=0.05)
    for _ in range(100):
        w = ps["w"]
        w.grad = 2 * (w.data - target)
        opt.step(ps)
    assert np.sum((ps["w"].data - target) ** 2) < 1e-3


def test_adam_aborts_on_non_finite_gradient():
    ps = single_param([1.0, 2.0])
    ps.add("v", np.zeros(2))
    ps["w"].grad = np.ones(2)
    ps["v"].grad = np.array([np.nan, 0.0])
    opt = Adam()
    with pytest.raises(NumericError, match="'v'"):
        opt.step(ps)
    np.testing.assert_array_equal(ps["w"].data, [1.0, 2.0])
    assert opt.step_count == 0


def test_clip_grad_norm():
    ps = single_param([0.0, 0.0])
    ps["w"].grad = np.array([3.0, 4.0])
    assert clip_grad_norm(ps, 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose(ps["w"].grad, [0.6, 0.8])
    ps["w"].grad = np.array([0.3, 0.4])
    clip_grad_norm(ps, 1.0)
    np.testing.assert_array_equal(ps["w"].grad, [0.3, 0.4])


# --- config ---------------------------------------------------------------------

def test_shipped_config_matches_defaults():
    hyper, cfg = parse_config(default_config_text())
    assert hyper == Hyperparams()
    assert cfg == TrainConfig()
    assert (hyper.encoder_hidden, hyper.heads, hyper.head_dim, hyper.dropout, cfg.alpha) == (
        256, 8, 32, 0.1, 0.6)


def test_config_round_trip():
    hyper = Hyperparams.tiny(alpha=0.7)
    cfg = TrainConfig(alpha=0.7, max_epochs=3, attn="single", dual=False, stop_at_dev_f1=0.9)
    assert parse_config(format_config(hyper, cfg)) == (hyper, cfg)


@pytest.mark.parametrize("text", ["colour = blue", "lr 0.1", "lr = fast", "dual = maybe",
                                  "lr = 1\nlr = 2", "alpha = 1.5", "heads = 3", "attn = lstm"])
def test_config_rejects_bad_input(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_alpha_sets_both():
    hyper, cfg = parse_config("alpha = 0.8  # heavier on positions\n")
    assert hyper.alpha == cfg.alpha == 0.8


# --- checkpoints ----------------------------------------------------------------

def small_checkpoint():
    net = DualPointerNet.initialize(Hyperparams.tiny(), VOCAB, "multi", seed=2)
    adam = {f"adam.m/{n}": np.full(t.shape, 0.5, np.float32) for n, t in net.params.items()}
    return Checkpoint(net.hyper, VOCAB, net.params, "multi", True, 3, TrainConfig(), 7, adam,
                      np.random.default_rng(0).bit_generator.state, {"best_f1": 0.5})


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    ckpt = small_checkpoint()
    path = tmp_path / "model.ckpt"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert path.read_bytes()[:8] == b"DPNRELX1"
    assert back.params.names() == ckpt.params.names()
    for name, t in ckpt.params.items():
        assert back.params[name].data.tobytes() == t.data.tobytes()
    for name, arr in ckpt.adam_state.items():
        assert back.adam_state[name].tobytes() == arr.tobytes()
    assert back.hyper == ckpt.hyper and back.vocab == VOCAB and back.config == TrainConfig()
    assert (back.epoch, back.adam_step, back.rng_state) == (3, 7, ckpt.rng_state)
    assert checkpoint_bytes(back) == path.read_bytes()


def test_checkpoint_rejects_damage():
    blob = checkpoint_bytes(small_checkpoint())
    with pytest.raises(CheckpointError, match="truncated"):
        parse_checkpoint(blob[:-4])
    with pytest.raises(CheckpointError, match="oversized"):
        parse_checkpoint(blob + b"\0\0\0\0")
    with pytest.raises(CheckpointError, match="magic"):
        parse_checkpoint(b"NOTACKPT" + blob[8:])
    with pytest.raises(CheckpointError):
        parse_checkpoint(blob[:20])
    bumped = blob.replace(b'"version":1', b'"version":9', 1)
    with pytest.raises(CheckpointError, match="version"):
        parse_checkpoint(bumped)


# --- training loop --------------------------------------------------------------

TINY_CFG = dict(max_epochs=3, lr=0.01, seed=4)


def tiny_corpus(n=12, seed=0):
    return generate_synthetic(n_sentences=n, seed=seed, vocab_size=30)


def sentence_loss(ckpt, ex):
    net = ckpt.network()
    out = net.forward(ex, RunMode())
    return compute_loss(out.objects, out.subjects, compute_pointer_targets(ex), 0.6, net.vocab).value


def test_one_epoch_on_one_sentence_lowers_its_loss():
    before = train([FIG1], None, TrainConfig(max_epochs=1, lr=0.0 + 1e-9), Hyperparams.tiny())
    after = train([FIG1], None, TrainConfig(max_epochs=1, lr=0.01), Hyperparams.tiny())
    assert sentence_loss(after.checkpoint, FIG1) < sentence_loss(before.checkpoint, FIG1)


def test_training_is_deterministic():
    data = tiny_corpus()
    a = train(data[:8], data[8:], TrainConfig(**TINY_CFG), Hyperparams.tiny(dropout=0.2))
    b = train(data[:8], data[8:], TrainConfig(**TINY_CFG), Hyperparams.tiny(dropout=0.2))
    assert [r.loss for r in a.history] == [r.loss for r in b.history]
    assert checkpoint_bytes(a.last) == checkpoint_bytes(b.last)
    assert checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint)
    assert len(a.history) <= 3


def test_history_and_best_checkpoint():
    data = tiny_corpus()
    res = train(data[:8], data[8:], TrainConfig(**TINY_CFG), Hyperparams.tiny())
    assert [r.epoch for r in res.history] == [1, 2, 3]
    best = max(res.history, key=lambda r: r.dev_f1)
    assert res.checkpoint.epoch == best.epoch
    assert res.last.epoch == 3
    checkpoint, history = res
    csv = history_csv(history).splitlines()
    assert csv[0] == "epoch,loss,steps,dev_precision,dev_recall,dev_f1" and len(csv) == 4


def test_without_dev_trains_all_epochs():
    data = tiny_corpus()
    res = train(data, None, TrainConfig(max_epochs=2, patience=1), Hyperparams.tiny())
    assert len(res.history) == 2 and res.history[-1].dev_f1 is None
    assert res.checkpoint.epoch == 2


def test_batches_group_sentences():
    data = tiny_corpus()
    res = train(data, None, TrainConfig(max_epochs=1, batch_size=5), Hyperparams.tiny())
    assert res.history[0].steps == math.ceil(len(data) / 5)


def test_early_stopping_respects_patience():
    data = tiny_corpus()
    res = train(data[:8], data[8:], TrainConfig(max_epochs=40, patience=2, lr=1e-7),
                Hyperparams.tiny())
    # a learning rate this small cannot keep improving dev F1
    assert len(res.history) < 40
    f1s = [r.dev_f1 for r in res.history]
    assert res.checkpoint.epoch == 1 + int(np.argmax(f1s))


def test_stop_at_dev_f1():
    data = tiny_corpus()
    res = train(data[:8], data[8:], TrainConfig(max_epochs=5, stop_at_dev_f1=1e-9),
                Hyperparams.tiny())
    assert len(res.history) == 1 or res.history[0].dev_f1 == 0.0


def test_resume_continues_identical_trajectory(tmp_path):
    data = tiny_corpus()
    cfg = TrainConfig(max_epochs=4, lr=0.01, seed=1)
    full = train(data[:8], data[8:], cfg, Hyperparams.tiny(dropout=0.2))
    first = train(data[:8], data[8:], TrainConfig(max_epochs=2, lr=0.01, seed=1),
                  Hyperparams.tiny(dropout=0.2))
    save_checkpoint(first.last, tmp_path / "last.ckpt")
    save_checkpoint(first.checkpoint, tmp_path / "best.ckpt")
    resumed = train(data[:8], data[8:], cfg, resume=load_checkpoint(tmp_path / "last.ckpt"),
                    resume_best=load_checkpoint(tmp_path / "best.ckpt"))
    assert [r.loss for r in resumed.history] == [r.loss for r in full.history]
    assert checkpoint_bytes(resumed.last) == checkpoint_bytes(full.last)
    # the best checkpoint may predate the resume and then records the shorter run's config
    assert resumed.checkpoint.epoch == full.checkpoint.epoch
    for name, t in full.checkpoint.params.items():
        assert resumed.checkpoint.params[name].data.tobytes() == t.data.tobytes()


def test_non_finite_loss_aborts_with_location():
    data = tiny_corpus(4)
    net = DualPointerNet.initialize(Hyperparams.tiny(), build_vocabs(data), seed=0)
    net.params["null_slot"].data[...] = np.nan
    ckpt = Checkpoint(net.hyper, net.vocab, net.params, net.attn)
    with pytest.raises(NumericError, match="epoch 1, sentence"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            train(data, None, TrainConfig(max_epochs=1), resume=ckpt)


def test_train_rejects_empty_set():
    with pytest.raises(ValueError):
        train([], None)
