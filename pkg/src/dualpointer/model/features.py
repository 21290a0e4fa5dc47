"""Integer id arrays for one sentence under a vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import CorpusError, Example, Vocab


@dataclass
class Features:
    word_ids: np.ndarray        # [L]
    char_ids: np.ndarray        # [L, max_chars]
    char_lens: np.ndarray       # [L]
    ent_word_ids: np.ndarray    # [m, max_entity_tokens]
    ent_word_lens: np.ndarray   # [m]
    ent_char_ids: np.ndarray    # [m, max_entity_chars]
    ent_char_lens: np.ndarray   # [m]
    type_ids: np.ndarray        # [m]

    @property
    def n_tokens(self) -> int:
        return len(self.word_ids)

    @property
    def n_entities(self) -> int:
        return len(self.type_ids)


def _pad(rows: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    lens = np.array([max(len(r), 1) for r in rows], dtype=np.int64)
    out = np.zeros((len(rows), int(lens.max()) if len(rows) else 1), dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out, lens


def featurize(ex: Example, vocab: Vocab) -> Features:
    """Map tokens, characters and entity types to ids (unknown words/chars -> UNK)."""
    if not ex.tokens:
        raise CorpusError("cannot featurize an empty sentence")
    word_ids = np.array([vocab.word_id(t) for t in ex.tokens], dtype=np.int64)
    char_ids, char_lens = _pad([vocab.char_ids(t) for t in ex.tokens])
    ent_words = [[vocab.word_id(t) for t in ex.entity_tokens(i)] for i in range(ex.n_entities)]
    ent_chars = [vocab.char_ids(ex.entity_text(i)) for i in range(ex.n_entities)]
    ent_word_ids, ent_word_lens = _pad(ent_words)
    ent_char_ids, ent_char_lens = _pad(ent_chars)
    try:
        type_ids = np.array([vocab.type2id[e.type] for e in ex.entities], dtype=np.int64)
    except KeyError as exc:
        raise CorpusError(f"unknown entity type {exc.args[0]!r}") from None
    return Features(word_ids, char_ids, char_lens, ent_word_ids, ent_word_lens,
                    ent_char_ids, ent_char_lens, type_ids)
