"""Context and entity encoder.

Words are embedded as [word vector; char-CNN], entities as
[word-CNN over their word vectors; char-CNN over their surface; type
vector].  A BiLSTM encodes the words into context rows ``C``, a forward
LSTM encodes the entities into ``S``, and multi-head context-to-entity
attention (entity queries, context keys/values) yields one output row per
entity.  Row 0 of the pointer memory ``O`` is a learned NULL slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..autodiff import functional as F
from .features import Features
from .params import Hyperparams, ParameterSet


@dataclass
class RunMode:
    training: bool = False
    rng: np.random.Generator | None = None


INFERENCE = RunMode()


@dataclass
class EncodedSentence:
    C: Tensor            # [L, 2 * encoder_hidden]
    S: Tensor            # [m, encoder_hidden]
    E: Tensor            # [m, entity_repr_dim]
    O: Tensor            # [m + 1, heads * head_dim]
    attention: Tensor    # [heads, m, L]


def _masked_lookup(table: Tensor, ids: np.ndarray, lens: np.ndarray) -> Tensor:
    """Embed a padded id matrix ``[B, T]`` with padding rows forced to zero."""
    b, t = ids.shape
    flat = F.embedding_lookup(table, ids.reshape(-1))
    emb = F.reshape(flat, (b, t, table.shape[1]))
    mask = (np.arange(t)[None, :] < lens[:, None]).astype(table.dtype)[:, :, None]
    return emb * Tensor(mask)


def cnn_bank(seqs: Tensor, lens: np.ndarray, params: ParameterSet, prefix: str,
             hyper: Hyperparams) -> Tensor:
    """Max-over-time CNN features ``[B, cnn_total_filters]`` for a padded batch."""
    outs = [F.conv1d_maxpool_batch(seqs, lens, params[f"{prefix}.w{w}"], params[f"{prefix}.b{w}"])
            for w in hyper.cnn_filter_sizes]
    return F.concat(outs, axis=1)


def embed_words(feats: Features, params: ParameterSet, hyper: Hyperparams) -> Tensor:
    """Per token: [word table row; char-CNN] -> ``[L, word_dim + cnn_total_filters]``."""
    words = F.embedding_lookup(params["word_emb"], feats.word_ids)
    chars = _masked_lookup(params["char_emb"], feats.char_ids, feats.char_lens)
    return F.concat([words, cnn_bank(chars, feats.char_lens, params, "word_char_cnn", hyper)], axis=1)


def embed_entities(feats: Features, params: ParameterSet, hyper: Hyperparams) -> Tensor:
    """Per entity: [word-CNN; char-CNN; type] -> ``[m, 2 * cnn_total_filters + type_dim]``."""
    words = _masked_lookup(params["word_emb"], feats.ent_word_ids, feats.ent_word_lens)
    chars = _masked_lookup(params["char_emb"], feats.ent_char_ids, feats.ent_char_lens)
    types = F.embedding_lookup(params["type_emb"], feats.type_ids)
    return F.concat([
        cnn_bank(words, feats.ent_word_lens, params, "ent_word_cnn", hyper),
        cnn_bank(chars, feats.ent_char_lens, params, "ent_char_cnn", hyper),
        types,
    ], axis=1)


def _lstm(x: Tensor, params: ParameterSet, prefix: str, reverse: bool = False) -> Tensor:
    return F.lstm_sequence(x, params[f"{prefix}.wx"], params[f"{prefix}.wh"], params[f"{prefix}.b"],
                           reverse=reverse)


def encode_context(W: Tensor, params: ParameterSet, hyper: Hyperparams,
                   mode: RunMode = INFERENCE) -> Tensor:
    fwd = _lstm(W, params, "ctx_fwd")
    bwd = _lstm(W, params, "ctx_bwd", reverse=True)
    return F.dropout(F.concat([fwd, bwd], axis=1), hyper.dropout, mode.training, mode.rng)


def encode_entities(E: Tensor, params: ParameterSet, hyper: Hyperparams,
                    mode: RunMode = INFERENCE) -> Tensor:
    return F.dropout(_lstm(E, params, "ent_lstm"), hyper.dropout, mode.training, mode.rng)


def context_to_entity_attention(C: Tensor, S: Tensor, params: ParameterSet,
                                hyper: Hyperparams) -> tuple[Tensor, Tensor]:
    """Multi-head attention from entity rows of ``S`` over context rows of ``C``.

    Each entity vector is split into ``heads`` slices, each projected by the
    shared query map ``c2e.wa``.  Context rows are split channel-wise and
    projected per head to keys and values.  Returns the ``[m, heads *
    head_dim]`` outputs and the ``[heads, m, L]`` attention weights.
    """
    h = hyper.heads
    m, L = S.shape[0], C.shape[0]
    q = F.matmul(F.reshape(S, (m, h, S.shape[1] // h)), params["c2e.wa"])      # [m, h, d]
    q = F.transpose(q, (1, 0, 2))                                               # [h, m, d]
    ctx = F.transpose(F.reshape(C, (L, h, C.shape[1] // h)), (1, 0, 2))         # [h, L, 2H/h]
    k = F.matmul(ctx, params["c2e.wk"])                                         # [h, L, d]
    v = F.matmul(ctx, params["c2e.wv"])
    heads, weights = F.scaled_dot_attention(q, k, v)                           # [h, m, d]
    joined = F.reshape(F.transpose(heads, (1, 0, 2)), (m, h * hyper.head_dim))
    out = F.relu(F.matmul(joined, params["c2e.wo"]) + params["c2e.bo"])
    return out, weights


def encode(feats: Features, params: ParameterSet, hyper: Hyperparams,
           mode: RunMode = INFERENCE) -> EncodedSentence:
    if feats.n_entities < 1:
        raise ValueError("encoding needs at least one entity")
    W = embed_words(feats, params, hyper)
    E = embed_entities(feats, params, hyper)
    C = encode_context(W, params, hyper, mode)
    S = encode_entities(E, params, hyper, mode)
    o, weights = context_to_entity_attention(C, S, params, hyper)
    O = F.concat([params["null_slot"], o], axis=0)
    return EncodedSentence(C=C, S=S, E=E, O=O, attention=weights)
