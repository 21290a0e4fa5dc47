"""Training loop with early stopping on dev micro-F1."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ..data import Example, Vocab, build_vocabs, compute_pointer_targets, load_glove
from ..evaluation import evaluate
from ..model import DualPointerNet, Hyperparams, RunMode
from .checkpoint import Checkpoint
from .config import TrainConfig
from .loss import compute_loss
from .optim import Adam, NumericError, clip_grad_norm

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    steps: int
    dev_precision: float | None = None
    dev_recall: float | None = None
    dev_f1: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


HISTORY_COLUMNS = ("epoch", "loss", "steps", "dev_precision", "dev_recall", "dev_f1")


def history_csv(history: Sequence[EpochRecord]) -> str:
    def cell(v):
        if v is None:
            return ""
        return repr(float(v)) if isinstance(v, float) else str(v)
    rows = [",".join(HISTORY_COLUMNS)]
    rows += [",".join(cell(getattr(r, c)) for c in HISTORY_COLUMNS) for r in history]
    return "\n".join(rows) + "\n"


@dataclass
class TrainResult:
    checkpoint: Checkpoint          # best dev F1 (or the last epoch without dev data)
    last: Checkpoint                # state after the final epoch, resumable
    history: list[EpochRecord]

    def __iter__(self):
        return iter((self.checkpoint, self.history))

    @property
    def best_epoch(self) -> int:
        return self.checkpoint.epoch


def _snapshot(net: DualPointerNet, config: TrainConfig, epoch: int, adam: Adam,
              rng: np.random.Generator, state: dict) -> Checkpoint:
    adam_state = {k: v.copy() for k, v in adam.state_arrays().items()}
    return Checkpoint(net.hyper, net.vocab, net.params.copy(), net.attn, config.dual, epoch,
                      config, adam.step_count, adam_state,
                      copy.deepcopy(rng.bit_generator.state), copy.deepcopy(state))


def train(train_set: Sequence[Example], dev_set: Sequence[Example] | None,
          config: TrainConfig | None = None, hyper: Hyperparams | None = None,
          vocab: Vocab | None = None, resume: Checkpoint | None = None,
          resume_best: Checkpoint | None = None, glove: str | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None,
          dtype=np.float32) -> TrainResult:
    """Fit a dual pointer network.

    Each epoch shuffles the training sentences with the seeded generator,
    accumulates the loss gradient over ``batch_size`` sentences, clips the
    global norm and takes one Adam step.  With dev data the best-F1 epoch
    is kept and training stops after ``patience`` epochs without
    improvement; without dev data it runs ``max_epochs``.

    ``resume`` continues from a checkpoint returned as ``TrainResult.last``
    (pass the matching best checkpoint as ``resume_best`` to keep tracking
    it); the loss trajectory then matches an uninterrupted run.
    """
    config = config or TrainConfig()
    if not train_set:
        raise ValueError("training set is empty")
    if resume is not None:
        hyper = resume.hyper
        vocab = resume.vocab
        config = replace(config, attn=resume.attn, dual=resume.dual)
        net = DualPointerNet(hyper, vocab, resume.params.copy(), resume.attn)
    else:
        hyper = hyper or Hyperparams()
        vocab = vocab or build_vocabs(train_set)
        net = DualPointerNet.initialize(hyper, vocab, config.attn, seed=config.seed, dtype=dtype)
        if glove:
            load_glove(glove, vocab, net.params["word_emb"].data)
    if hyper.alpha != config.alpha:
        hyper = replace(hyper, alpha=config.alpha)
        net.hyper = hyper

    adam = Adam(config.lr, (config.beta1, config.beta2), config.eps)
    rng = np.random.default_rng(config.seed)
    state = {"best_f1": -1.0, "best_epoch": 0, "bad_epochs": 0, "history": []}
    start_epoch = 0
    if resume is not None:
        adam.load_state(resume.adam_step, {k: v.copy() for k, v in resume.adam_state.items()})
        if resume.rng_state is not None:
            rng.bit_generator.state = copy.deepcopy(resume.rng_state)
        if resume.trainer_state:
            state = copy.deepcopy(resume.trainer_state)
        start_epoch = resume.epoch
    history = [EpochRecord(**r) for r in state["history"]]
    best = resume_best if resume_best is not None else None

    feats = [net.featurize(ex) for ex in train_set]
    targets = [compute_pointer_targets(ex) for ex in train_set]
    usable = [i for i, ex in enumerate(train_set) if ex.n_entities > 0]
    mode = RunMode(training=True, rng=rng)
    n = len(train_set)

    last = None
    exhausted = bool(dev_set) and state["bad_epochs"] >= config.patience
    for epoch in range(start_epoch + 1, 0 if exhausted else config.max_epochs + 1):
        order = rng.permutation(n)
        usable_set = set(usable)
        order = [int(i) for i in order if int(i) in usable_set]
        total, steps = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            scale = 1.0 / len(batch)
            for i in batch:
                out = net.forward(feats[i], mode, dual=config.dual)
                loss = compute_loss(out.objects, out.subjects, targets[i], config.alpha, vocab)
                value = loss.value
                if not math.isfinite(value):
                    net.params.zero_grad()
                    raise NumericError(f"non-finite loss at epoch {epoch}, sentence {i}")
                total += value
                (loss.total * scale).backward()
            clip_grad_norm(net.params, config.clip_norm)
            try:
                adam.step(net.params)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch starting at sentence {batch[0]}: {exc}") \
                    from None
            steps += 1
        record = EpochRecord(epoch, total / max(len(order), 1), steps)
        if dev_set:
            report = evaluate(net, dev_set, dual=config.dual)
            record.dev_precision, record.dev_recall, record.dev_f1 = (
                report.precision, report.recall, report.f1)
        history.append(record)
        state["history"].append(record.to_json())

        improved = dev_set and record.dev_f1 > state["best_f1"]
        if improved:
            state["best_f1"], state["best_epoch"], state["bad_epochs"] = record.dev_f1, epoch, 0
        elif dev_set:
            state["bad_epochs"] += 1
        last = _snapshot(net, config, epoch, adam, rng, state)
        if improved or not dev_set:
            best = last
        if on_epoch is not None:
            on_epoch(record)
        logger.info("epoch %d loss %.5f dev_f1 %s", epoch, record.loss, record.dev_f1)
        if dev_set and state["bad_epochs"] >= config.patience:
            break
        if dev_set and config.stop_at_dev_f1 is not None and record.dev_f1 >= config.stop_at_dev_f1:
            break

    if last is None:
        last = _snapshot(net, config, start_epoch, adam, rng, state)
    if best is None:
        best = resume if resume is not None else last
    return TrainResult(best, last, history)
