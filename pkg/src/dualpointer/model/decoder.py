"""Dual pointer decoder and triple assembly.

The object decoder scans entities first to last and points each one at its
object; the subject decoder scans last to first and points each one at its
subject.  Pointer targets are the rows of ``O``: slot 0 means "no partner"
and slot ``k + 1`` is entity ``k``.  An entity's own slot is always masked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..autodiff import functional as F
from ..data import Example
from .encoder import INFERENCE, EncodedSentence, RunMode
from .params import Hyperparams, ParameterSet

DIRECTIONS = {"objects": "obj", "subjects": "sub"}
FORWARD, BACKWARD, BOTH = "forward", "backward", "both"


def self_mask(m: int) -> np.ndarray:
    """``[m, m + 1]`` boolean mask, False exactly at each entity's own slot."""
    mask = np.ones((m, m + 1), dtype=bool)
    mask[np.arange(m), np.arange(m) + 1] = False
    return mask


@dataclass
class DecoderOutput:
    direction: str
    attention: Tensor                   # [m, m + 1] pointer distribution per entity
    relation_logits: Tensor             # [m, n_relations]
    head_attention: Tensor | None = None  # [heads, m, m + 1] for the multi-head pointer
    attn: str = "multi"

    @property
    def n_entities(self) -> int:
        return self.attention.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return np.argmax(self.attention.data, axis=1)

    @property
    def relations(self) -> np.ndarray:
        return relation_readout(self.relation_logits.data, self.attn)

    def relation_probs(self) -> np.ndarray:
        z = self.relation_logits.data.astype(np.float64)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


def relation_readout(logits: np.ndarray, attn: str) -> np.ndarray:
    """Predicted relation ids.

    The multi-head readout is ``argmax(relu(logits))``; when every logit is
    non-positive relu flattens the row and the raw logits break the tie.
    """
    if attn != "multi":
        return np.argmax(logits, axis=1)
    rectified = np.maximum(logits, 0)
    best = np.argmax(rectified, axis=1)
    flat = rectified.max(axis=1) <= 0
    best[flat] = np.argmax(logits[flat], axis=1)
    return best


def pointer_attention_single(O: Tensor, G: Tensor, mask: np.ndarray, params: ParameterSet,
                             side: str) -> tuple[Tensor, Tensor]:
    """Additive pointer: ``score[t, k] = v . tanh(W [O_k; g_t])``.

    Relation logits are ``u . tanh(z [a_t O; g_t])``.  All entities are
    scored at once; returns ``([m, m + 1] attention, [m, R] logits)``.
    """
    mem = F.matmul(O, params[f"{side}.w_mem"])           # [m+1, A]
    query = F.matmul(G, params[f"{side}.w_query"])       # [m, A]
    m, width = query.shape
    hidden = F.tanh(F.reshape(mem, (1,) + mem.shape) + F.reshape(query, (m, 1, width)))
    scores = F.matmul(hidden, F.reshape(params[f"{side}.v"], (width, 1)))
    attention = F.softmax(F.reshape(scores, (m, O.shape[0])), mask=mask)
    context = F.matmul(attention, O)                      # [m, d_o]
    rel_hidden = F.tanh(F.matmul(F.concat([context, G], axis=1), params[f"{side}.z"]))
    return attention, F.matmul(rel_hidden, params[f"{side}.u"])


def pointer_attention_multi(O: Tensor, G: Tensor, mask: np.ndarray, params: ParameterSet,
                            side: str, hyper: Hyperparams) -> tuple[Tensor, Tensor, Tensor]:
    """Multi-head pointer over the rows of ``O``.

    Each decoder state is split into ``heads`` slices projected by the shared
    ``wl``; keys and values are the matching channel slices of ``O``.  The
    pointer distribution is the mean of the head distributions and relation
    logits are an affine map of the concatenated heads.
    """
    h = hyper.heads
    m, slots = G.shape[0], O.shape[0]
    q = F.matmul(F.reshape(G, (m, h, G.shape[1] // h)), params[f"{side}.wl"])
    q = F.transpose(q, (1, 0, 2))                                       # [h, m, d]
    kv = F.transpose(F.reshape(O, (slots, h, O.shape[1] // h)), (1, 0, 2))  # [h, m+1, d]
    heads, weights = F.scaled_dot_attention(q, kv, kv, mask=mask[None, :, :])
    attention = F.mean(weights, axis=0)
    joined = F.reshape(F.transpose(heads, (1, 0, 2)), (m, h * hyper.head_dim))
    logits = F.matmul(joined, params[f"{side}.wr"]) + params[f"{side}.br"]
    return attention, logits, weights


def decode(enc: EncodedSentence, direction: str, attn: str, params: ParameterSet,
           hyper: Hyperparams, mode: RunMode = INFERENCE) -> DecoderOutput:
    """Point every entity at its object (``objects``) or subject (``subjects``)."""
    try:
        side = DIRECTIONS[direction]
    except KeyError:
        raise ValueError(f"direction must be one of {sorted(DIRECTIONS)}, got {direction!r}") from None
    steps = F.concat([enc.E, enc.S], axis=1)
    G = F.lstm_sequence(steps, params[f"{side}.lstm.wx"], params[f"{side}.lstm.wh"],
                        params[f"{side}.lstm.b"], reverse=(side == "sub"))
    G = F.dropout(G, hyper.dropout, mode.training, mode.rng)
    mask = self_mask(G.shape[0])
    if attn == "single":
        attention, logits = pointer_attention_single(enc.O, G, mask, params, side)
        return DecoderOutput(direction, attention, logits, None, attn)
    if attn == "multi":
        attention, logits, heads = pointer_attention_multi(enc.O, G, mask, params, side, hyper)
        return DecoderOutput(direction, attention, logits, heads, attn)
    raise ValueError(f"attn must be 'single' or 'multi', got {attn!r}")


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictedTriple:
    subject: int
    relation: str
    object: int
    confidence: float
    source: str

    @property
    def key(self) -> tuple[int, str, int]:
        return (self.subject, self.relation, self.object)


@dataclass
class TripleSet:
    triples: list[PredictedTriple] = field(default_factory=list)

    def __iter__(self):
        return iter(self.triples)

    def __len__(self) -> int:
        return len(self.triples)

    def as_set(self) -> set[tuple[int, str, int]]:
        return {t.key for t in self.triples}

    def to_json(self, ex: Example | None = None) -> list[dict]:
        out = []
        for t in self.triples:
            rec = {"subject": t.subject, "relation": t.relation, "object": t.object,
                   "confidence": round(float(t.confidence), 6), "source": t.source}
            if ex is not None:
                rec["subject_text"] = ex.entity_text(t.subject)
                rec["object_text"] = ex.entity_text(t.object)
            out.append(rec)
        return out


def _candidates(out: DecoderOutput, relations: list[str], source: str):
    attention = out.attention.data
    probs = out.relation_probs()
    for t, (slot, rel) in enumerate(zip(out.positions, out.relations)):
        if slot == 0 or rel == 0:
            continue
        partner = int(slot) - 1
        conf = float(attention[t, slot]) * float(probs[t, rel])
        s, o = (t, partner) if source == FORWARD else (partner, t)
        yield PredictedTriple(s, relations[int(rel)], o, conf, source), float(probs[t, rel])


def assemble_triples(fwd: DecoderOutput, bwd: DecoderOutput | None,
                     relations: list[str]) -> TripleSet:
    """Union of both decoders' non-NULL, non-NONE pointers.

    A triple found by both decoders is kept once with ``source="both"``.
    When the decoders disagree on the relation for one (subject, object)
    pair, the higher relation probability wins and ties go to the forward
    decoder.  Pass ``bwd=None`` for a forward-only system.
    """
    by_pair: dict[tuple[int, int], tuple[PredictedTriple, float]] = {}
    streams = [(fwd, FORWARD)] + ([(bwd, BACKWARD)] if bwd is not None else [])
    for out, source in streams:
        for cand, rel_prob in _candidates(out, relations, source):
            pair = (cand.subject, cand.object)
            held = by_pair.get(pair)
            if held is None:
                by_pair[pair] = (cand, rel_prob)
            elif held[0].relation == cand.relation:
                merged = PredictedTriple(cand.subject, cand.relation, cand.object,
                                         max(held[0].confidence, cand.confidence), BOTH)
                by_pair[pair] = (merged, max(held[1], rel_prob))
            elif rel_prob > held[1]:
                by_pair[pair] = (cand, rel_prob)
    triples = sorted((t for t, _ in by_pair.values()), key=lambda t: (t.subject, t.object))
    return TripleSet(triples)


def forward_only_ceiling(ex: Example) -> float:
    """Best recall any decoder with one forward pointer per entity can reach."""
    if not ex.triples:
        return 1.0
    subjects = {t.subject for t in ex.triples}
    return len(subjects) / len(ex.triples)
