"""Scikit-learn style wrapper around the training and prediction pipeline."""

from __future__ import annotations

from dataclasses import fields
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import CorpusError, Example
from .evaluation import evaluate, micro_prf
from .model import ATTENTION_KINDS, Hyperparams
from .training import TrainConfig, train


def check_examples(X, require_triples: bool = True, name: str = "X") -> list[Example]:
    """Validate a corpus argument and return it as a list of examples.

    Accepts ``Example`` objects or their JSON dicts.  Raises ``ValueError``
    on an empty corpus and ``CorpusError`` on a malformed sentence.
    """
    if isinstance(X, (str, bytes, Example)) or not hasattr(X, "__iter__"):
        raise TypeError(f"{name} must be a sequence of examples, got {type(X).__name__}")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, dict):
            item = Example.from_json(item, require_triples=require_triples)
        if not isinstance(item, Example):
            raise TypeError(f"{name}[{i}] is a {type(item).__name__}, not an Example")
        try:
            out.append(item.validate())
        except CorpusError as exc:
            raise CorpusError(f"{name}[{i}]: {exc}") from None
    if not out:
        raise ValueError(f"{name} is empty")
    return out


def check_is_fitted(est: "DualPointerExtractor") -> None:
    if getattr(est, "checkpoint_", None) is None:
        raise NotFittedError(f"{type(est).__name__} is not fitted; call fit first")


class DualPointerExtractor(BaseEstimator):
    """Relation triple extractor with dual (object and subject) pointer decoders.

    ``fit(X)`` trains on sentences with gold entities and triples;
    ``predict(X)`` returns one set of ``(subject, relation, object)`` tuples
    per sentence, with entities referenced by index.  ``y`` is accepted for
    API symmetry and ignored because the triples live on each example.
    """

    def __init__(self, attn="multi", dual=True, alpha=0.6, word_dim=300, char_dim=50,
                 entity_type_dim=50, cnn_filter_sizes=(3, 4, 5), cnn_total_filters=100,
                 encoder_hidden=256, decoder_hidden=512, heads=8, head_dim=32, dropout=0.1,
                 lr=1e-3, batch_size=1, max_epochs=200, clip_norm=5.0, patience=20, seed=0):
        self.attn = attn
        self.dual = dual
        self.alpha = alpha
        self.word_dim = word_dim
        self.char_dim = char_dim
        self.entity_type_dim = entity_type_dim
        self.cnn_filter_sizes = cnn_filter_sizes
        self.cnn_total_filters = cnn_total_filters
        self.encoder_hidden = encoder_hidden
        self.decoder_hidden = decoder_hidden
        self.heads = heads
        self.head_dim = head_dim
        self.dropout = dropout
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.clip_norm = clip_norm
        self.patience = patience
        self.seed = seed

    def _hyper(self) -> Hyperparams:
        return Hyperparams(**{f.name: getattr(self, f.name) for f in fields(Hyperparams)})

    def _config(self) -> TrainConfig:
        if self.attn not in ATTENTION_KINDS:
            raise ValueError(f"attn must be one of {ATTENTION_KINDS}, got {self.attn!r}")
        return TrainConfig(alpha=self.alpha, lr=self.lr, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, clip_norm=self.clip_norm,
                           patience=self.patience, seed=self.seed, attn=self.attn,
                           dual=bool(self.dual))

    def fit(self, X, y=None, dev=None):
        """Train on ``X``; ``dev`` enables early stopping on its micro-F1."""
        X = check_examples(X)
        dev = check_examples(dev, name="dev") if dev is not None else None
        result = train(X, dev, self._config(), self._hyper())
        self.checkpoint_ = result.checkpoint
        self.history_ = result.history
        self.vocab_ = result.checkpoint.vocab
        self.n_relations_ = self.vocab_.n_relations - 1
        return self

    def predict(self, X) -> list[set[tuple[int, str, int]]]:
        check_is_fitted(self)
        X = check_examples(X, require_triples=False)
        net = self.checkpoint_.network()
        return [net.predict(ex, dual=self.checkpoint_.dual).as_set() for ex in X]

    def predict_triples(self, X):
        """Like ``predict`` but keeps confidences and which decoder found each triple."""
        check_is_fitted(self)
        X = check_examples(X, require_triples=False)
        net = self.checkpoint_.network()
        return [net.predict(ex, dual=self.checkpoint_.dual) for ex in X]

    def score(self, X, y=None) -> float:
        """Micro-F1 of the predictions against the gold triples on ``X``."""
        check_is_fitted(self)
        return evaluate(self.checkpoint_, check_examples(X)).f1


def prf_arrays(gold: Sequence, pred: Sequence) -> np.ndarray:
    """``[precision, recall, f1]`` as an array, for use in scoring callbacks."""
    rep = micro_prf(gold, pred)
    return np.array([rep.precision, rep.recall, rep.f1])
