"""Weighted cross-entropy over pointer positions and relation labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..autodiff import functional as F
from ..data import PointerTargets, Vocab
from ..model import DecoderOutput


@dataclass
class LossBreakdown:
    total: Tensor
    pos_obj: float
    pos_sub: float
    rel_obj: float
    rel_sub: float

    @property
    def value(self) -> float:
        return self.total.item()

    @property
    def position_part(self) -> float:
        return self.pos_obj + self.pos_sub

    @property
    def relation_part(self) -> float:
        return self.rel_obj + self.rel_sub


def relation_ids(labels: list[str], vocab: Vocab) -> np.ndarray:
    try:
        return np.array([vocab.rel2id[r] for r in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"relation {exc.args[0]!r} is not in the vocabulary") from None


def compute_loss(fwd: DecoderOutput, bwd: DecoderOutput | None, targets: PointerTargets,
                 alpha: float, vocab: Vocab) -> LossBreakdown:
    """``alpha/2 (CE_pos_sub + CE_pos_obj) + (1-alpha)/2 (CE_rel_sub + CE_rel_obj)``.

    Each CE term is a mean over entities.  Position CE is taken on the
    pointer distribution itself (head-averaged for the multi-head pointer).
    Without a subject decoder the loss is ``alpha CE_pos_obj + (1-alpha)
    CE_rel_obj``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    pos_obj = F.nll_of_probs(fwd.attention, targets.obj_slots())
    rel_obj = F.cross_entropy(fwd.relation_logits, relation_ids(targets.obj_rel, vocab))
    if bwd is None:
        total = pos_obj * alpha + rel_obj * (1.0 - alpha)
        return LossBreakdown(total, pos_obj.item(), 0.0, rel_obj.item(), 0.0)
    pos_sub = F.nll_of_probs(bwd.attention, targets.sub_slots())
    rel_sub = F.cross_entropy(bwd.relation_logits, relation_ids(targets.sub_rel, vocab))
    total = (pos_sub + pos_obj) * (alpha / 2.0) + (rel_sub + rel_obj) * ((1.0 - alpha) / 2.0)
    return LossBreakdown(total, pos_obj.item(), pos_sub.item(), rel_obj.item(), rel_sub.item())
