"""Word, character, entity-type and relation vocabularies."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .example import Example, atomic_write_text

logger = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
NONE_RELATION = "NONE"
NONE_ID = 0
FORMAT_VERSION = 1


@dataclass
class Vocab:
    word2id: dict[str, int] = field(default_factory=lambda: {PAD: PAD_ID, UNK: UNK_ID})
    char2id: dict[str, int] = field(default_factory=lambda: {PAD: PAD_ID, UNK: UNK_ID})
    type2id: dict[str, int] = field(default_factory=dict)
    rel2id: dict[str, int] = field(default_factory=lambda: {NONE_RELATION: NONE_ID})

    def __post_init__(self):
        self._check()
        self.id2word = {i: w for w, i in self.word2id.items()}
        self.id2char = {i: c for c, i in self.char2id.items()}
        self.id2type = {i: t for t, i in self.type2id.items()}
        self.id2rel = {i: r for r, i in self.rel2id.items()}

    def _check(self) -> None:
        for name, table in (("word", self.word2id), ("char", self.char2id),
                            ("type", self.type2id), ("relation", self.rel2id)):
            if sorted(table.values()) != list(range(len(table))):
                raise ValueError(f"{name} ids are not dense and contiguous")
        if self.word2id.get(PAD) != PAD_ID or self.word2id.get(UNK) != UNK_ID:
            raise ValueError("word vocabulary must reserve PAD=0 and UNK=1")
        if self.char2id.get(PAD) != PAD_ID or self.char2id.get(UNK) != UNK_ID:
            raise ValueError("char vocabulary must reserve PAD=0 and UNK=1")
        if self.rel2id.get(NONE_RELATION) != NONE_ID:
            raise ValueError("relation vocabulary must reserve NONE=0")

    @property
    def n_words(self) -> int:
        return len(self.word2id)

    @property
    def n_chars(self) -> int:
        return len(self.char2id)

    @property
    def n_types(self) -> int:
        return len(self.type2id)

    @property
    def n_relations(self) -> int:
        return len(self.rel2id)

    @property
    def relations(self) -> list[str]:
        return [self.id2rel[i] for i in range(len(self.id2rel))]

    def word_id(self, word: str) -> int:
        return self.word2id.get(word, UNK_ID)

    def char_ids(self, text: str) -> list[int]:
        return [self.char2id.get(ch, UNK_ID) for ch in text]

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "word2id": self.word2id,
            "char2id": self.char2id,
            "type2id": self.type2id,
            "rel2id": self.rel2id,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Vocab":
        version = payload.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported vocab format version {version!r}")
        return cls(dict(payload["word2id"]), dict(payload["char2id"]),
                   dict(payload["type2id"]), dict(payload["rel2id"]))

    def canonical_json(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_json(), ensure_ascii=False, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocab):
            return NotImplemented
        return self.to_json() == other.to_json()


def build_vocabs(train: Sequence[Example], min_count: int = 1) -> Vocab:
    """Index the training split: frequent words, all chars, types and relations."""
    if not train:
        raise ValueError("cannot build vocabularies from an empty training set")
    words = Counter(tok for ex in train for tok in ex.tokens)
    vocab = Vocab()
    for w in sorted(words, key=lambda w: (-words[w], w)):
        if words[w] >= min_count and w not in vocab.word2id:
            vocab.word2id[w] = len(vocab.word2id)
    # the space joins multi-token entity surfaces for the entity char-CNN
    chars = sorted({ch for ex in train for tok in ex.tokens for ch in tok} | {" "})
    for ch in chars:
        if ch not in vocab.char2id:
            vocab.char2id[ch] = len(vocab.char2id)
    for t in sorted({e.type for ex in train for e in ex.entities}):
        vocab.type2id[t] = len(vocab.type2id)
    for r in sorted({t.relation for ex in train for t in ex.triples} - {NONE_RELATION}):
        vocab.rel2id[r] = len(vocab.rel2id)
    return Vocab(vocab.word2id, vocab.char2id, vocab.type2id, vocab.rel2id)


def load_glove(path, vocab: Vocab, table: np.ndarray) -> int:
    """Copy pretrained vectors (GloVe text layout) into ``table`` rows in place.

    Words missing from the file keep their random rows.  Returns the number
    of rows filled.  A vector width different from the table is an error.
    """
    filled = 0
    dim = table.shape[1]
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"{path}:{lineno}: vector has {len(values)} dims, embedding table has {dim}"
                )
            idx = vocab.word2id.get(word)
            if idx is None or idx == PAD_ID:
                continue
            table[idx] = np.asarray(values, dtype=table.dtype)
            filled += 1
    logger.info("loaded %d pretrained vectors for %d vocabulary words", filled, vocab.n_words)
    return filled
