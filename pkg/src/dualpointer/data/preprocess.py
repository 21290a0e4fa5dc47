"""Merging single-triple records, overlap classification, splitting and stats."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .example import CorpusError, Entity, Example, Triple

NORMAL, SEO, EPO = "normal", "SEO", "EPO"
OVERLAP_TYPES = (NORMAL, SEO, EPO)


class MergeConflictError(CorpusError):
    """Two records give the same span different entity types."""


@dataclass(frozen=True)
class TripleRecord:
    """One annotated triple in one sentence, as single-relation corpora ship them."""

    tokens: tuple[str, ...]
    subject: Entity
    relation: str
    object: Entity


def merge_shared_sentences(records: Sequence[TripleRecord]) -> list[Example]:
    """Fold records that share a sentence into one multi-triple :class:`Example`.

    Sentences keep first-appearance order.  Entities are unioned by span and
    re-indexed in (start, end) order; duplicate triples collapse.
    """
    groups: dict[tuple[str, ...], list[TripleRecord]] = {}
    for rec in records:
        groups.setdefault(tuple(rec.tokens), []).append(rec)
    merged = []
    for tokens, recs in groups.items():
        spans: dict[tuple[int, int], str] = {}
        for rec in recs:
            for ent in (rec.subject, rec.object):
                key = (ent.start, ent.end)
                if key in spans and spans[key] != ent.type:
                    raise MergeConflictError(
                        f"span {key} typed both {spans[key]!r} and {ent.type!r} in {' '.join(tokens)!r}"
                    )
                spans[key] = ent.type
        ordered = sorted(spans)
        position = {span: i for i, span in enumerate(ordered)}
        triples = []
        seen = set()
        for rec in recs:
            t = Triple(position[(rec.subject.start, rec.subject.end)], rec.relation,
                       position[(rec.object.start, rec.object.end)])
            if t not in seen:
                seen.add(t)
                triples.append(t)
        entities = [Entity(s, e, spans[(s, e)]) for s, e in ordered]
        merged.append(Example(list(tokens), entities, triples).validate())
    return merged


def classify_overlap(ex: Example) -> str:
    """Label a sentence normal, SEO or EPO by how its triples share entities."""
    for a, b in combinations(ex.triples, 2):
        if {a.subject, a.object} == {b.subject, b.object}:
            return EPO
    for a, b in combinations(ex.triples, 2):
        if {a.subject, a.object} & {b.subject, b.object}:
            return SEO
    return NORMAL


def split_dataset(examples: Sequence, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle by ``seed`` and cut into train/dev/test.

    Dev and test sizes are floored; the remainder goes to train.
    """
    if not examples:
        raise ValueError("cannot split an empty dataset")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(examples)
    order = np.random.default_rng(seed).permutation(n)
    n_dev = int(np.floor(n * ratios[1] + 1e-9))
    n_test = int(np.floor(n * ratios[2] + 1e-9))
    n_train = n - n_dev - n_test
    pick = lambda idx: [examples[i] for i in idx]
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_dev]),
            pick(order[n_train + n_dev:]))


@dataclass
class CorpusStats:
    sentences: int = 0
    triples: int = 0
    histogram: dict[str, int] = field(default_factory=lambda: {k: 0 for k in OVERLAP_TYPES})
    coverage_mean: float = 1.0
    patterns: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "sentences": self.sentences,
            "triples": self.triples,
            "histogram": dict(self.histogram),
            "coverage_mean": self.coverage_mean,
            "patterns": dict(self.patterns),
        }


def corpus_stats(examples: Sequence[Example]) -> CorpusStats:
    from .targets import compute_pointer_targets

    stats = CorpusStats()
    stats.sentences = len(examples)
    stats.triples = sum(len(ex.triples) for ex in examples)
    for ex in examples:
        stats.histogram[classify_overlap(ex)] += 1
    if examples:
        stats.coverage_mean = float(np.mean([compute_pointer_targets(ex).coverage for ex in examples]))
    stats.patterns = dict(sorted(Counter(ex.pattern for ex in examples if ex.pattern).items()))
    return stats
