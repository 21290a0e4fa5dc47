"""The full network: encoder, both pointer decoders and assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Example, Vocab
from .decoder import DecoderOutput, TripleSet, assemble_triples, decode
from .encoder import INFERENCE, EncodedSentence, RunMode, encode
from .features import Features, featurize
from .params import ATTENTION_KINDS, Hyperparams, ParameterSet, init_params


@dataclass
class ForwardPass:
    encoded: EncodedSentence
    objects: DecoderOutput
    subjects: DecoderOutput | None


class DualPointerNet:
    """Parameters plus the vocabulary and settings needed to run them."""

    def __init__(self, hyper: Hyperparams, vocab: Vocab, params: ParameterSet, attn: str = "multi"):
        if attn not in ATTENTION_KINDS:
            raise ValueError(f"attn must be one of {ATTENTION_KINDS}, got {attn!r}")
        self.hyper = hyper
        self.vocab = vocab
        self.params = params
        self.attn = attn

    @classmethod
    def initialize(cls, hyper: Hyperparams, vocab: Vocab, attn: str = "multi", seed: int = 0,
                   dtype=np.float32) -> "DualPointerNet":
        params = init_params(hyper, vocab.n_words, vocab.n_chars, vocab.n_types,
                             vocab.n_relations, attn=attn, seed=seed, dtype=dtype)
        return cls(hyper, vocab, params, attn)

    def astype(self, dtype) -> "DualPointerNet":
        return DualPointerNet(self.hyper, self.vocab, self.params.astype(dtype), self.attn)

    def featurize(self, ex: Example) -> Features:
        return featurize(ex, self.vocab)

    def forward(self, ex: Example | Features, mode: RunMode = INFERENCE,
                dual: bool = True) -> ForwardPass:
        feats = ex if isinstance(ex, Features) else self.featurize(ex)
        enc = encode(feats, self.params, self.hyper, mode)
        objects = decode(enc, "objects", self.attn, self.params, self.hyper, mode)
        subjects = decode(enc, "subjects", self.attn, self.params, self.hyper, mode) if dual else None
        return ForwardPass(enc, objects, subjects)

    def predict(self, ex: Example, dual: bool = True) -> TripleSet:
        if ex.n_entities == 0:
            return TripleSet()
        out = self.forward(ex, INFERENCE, dual=dual)
        return assemble_triples(out.objects, out.subjects, self.vocab.relations)
