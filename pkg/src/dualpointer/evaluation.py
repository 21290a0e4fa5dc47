"""Micro precision/recall/F1, model evaluation, ablation tables and error analysis."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import OVERLAP_TYPES, CorpusError, Example, classify_overlap
from .model import DualPointerNet, forward_only_ceiling

TripleKey = tuple[int, str, int]


class VocabMismatchError(ValueError):
    """Data or a vocabulary file is incompatible with a trained model."""


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class PRF:
    gold: int = 0
    predicted: int = 0
    correct: int = 0

    @property
    def precision(self) -> float:
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)

    def add(self, gold: set, pred: set) -> None:
        self.gold += len(gold)
        self.predicted += len(pred)
        self.correct += len(gold & pred)

    def to_json(self) -> dict:
        return {"gold": self.gold, "predicted": self.predicted, "correct": self.correct,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    """Corpus-level micro scores with per-relation and per-overlap-type breakdowns.

    ``ceiling`` is the best recall a forward-only decoder could reach on the
    same gold triples (distinct subjects over triples, pooled across
    sentences); ``mean_sentence_ceiling`` averages the per-sentence ratio.
    """

    totals: PRF
    per_relation: dict[str, PRF] = field(default_factory=dict)
    per_overlap: dict[str, PRF] = field(default_factory=dict)
    ceiling: float = 1.0
    mean_sentence_ceiling: float = 1.0
    sentences: int = 0
    label: str = ""

    precision = property(lambda self: self.totals.precision)
    recall = property(lambda self: self.totals.recall)
    f1 = property(lambda self: self.totals.f1)
    gold = property(lambda self: self.totals.gold)
    predicted = property(lambda self: self.totals.predicted)
    correct = property(lambda self: self.totals.correct)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "sentences": self.sentences,
            **self.totals.to_json(),
            "forward_only_ceiling": self.ceiling,
            "mean_sentence_ceiling": self.mean_sentence_ceiling,
            "per_relation": {k: v.to_json() for k, v in sorted(self.per_relation.items())},
            "per_overlap": {k: v.to_json() for k, v in self.per_overlap.items()},
        }

    def format_text(self) -> str:
        lines = [f"sentences {self.sentences}  gold {self.gold}  predicted {self.predicted}  "
                 f"correct {self.correct}",
                 f"precision {self.precision:.4f}  recall {self.recall:.4f}  f1 {self.f1:.4f}  "
                 f"forward-only ceiling {self.ceiling:.4f}"]
        for title, table in (("relation", self.per_relation), ("overlap", self.per_overlap)):
            if not table:
                continue
            width = max(len(title), *(len(k) for k in table))
            lines.append(f"{title:<{width}}  {'gold':>5} {'pred':>5} {'corr':>5}  "
                         f"{'P':>6} {'R':>6} {'F1':>6}")
            for k, v in sorted(table.items()) if title == "relation" else table.items():
                lines.append(f"{k:<{width}}  {v.gold:>5} {v.predicted:>5} {v.correct:>5}  "
                             f"{v.precision:>6.4f} {v.recall:>6.4f} {v.f1:>6.4f}")
        return "\n".join(lines)


def as_triple_set(triples) -> set[TripleKey]:
    """Normalize a TripleSet, a list of Triple/tuples or a set into ``{(s, r, o)}``."""
    if hasattr(triples, "as_set"):
        return triples.as_set()
    out = set()
    for t in triples:
        if hasattr(t, "subject"):
            out.add((int(t.subject), str(t.relation), int(t.object)))
        else:
            s, r, o = t
            out.add((int(s), str(r), int(o)))
    return out


def micro_prf(gold: Sequence, pred: Sequence, examples: Sequence[Example] | None = None,
              label: str = "") -> EvalReport:
    """Micro-averaged scores over sentence-aligned gold and predicted triples.

    A prediction counts iff its (subject, relation, object) is in the gold
    set of the same sentence.  Passing ``examples`` fills the overlap-type
    breakdown and the forward-only ceilings.
    """
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sentences but predictions have {len(pred)}")
    if examples is not None and len(examples) != len(gold):
        raise ValueError("examples must align with gold")
    totals = PRF()
    per_relation: dict[str, PRF] = {}
    per_overlap = {k: PRF() for k in OVERLAP_TYPES} if examples is not None else {}
    for i, (g_raw, p_raw) in enumerate(zip(gold, pred)):
        g, p = as_triple_set(g_raw), as_triple_set(p_raw)
        totals.add(g, p)
        for rel in {t[1] for t in g | p}:
            per_relation.setdefault(rel, PRF()).add({t for t in g if t[1] == rel},
                                                   {t for t in p if t[1] == rel})
        if examples is not None:
            per_overlap[classify_overlap(examples[i])].add(g, p)

    ceiling = mean_ceiling = 1.0
    if examples is not None and examples:
        n_triples = sum(len(ex.triples) for ex in examples)
        n_subjects = sum(len({t.subject for t in ex.triples}) for ex in examples)
        ceiling = n_subjects / n_triples if n_triples else 1.0
        mean_ceiling = float(np.mean([forward_only_ceiling(ex) for ex in examples]))
    return EvalReport(totals, per_relation, per_overlap, ceiling, mean_ceiling, len(gold), label)


def _network(model) -> DualPointerNet:
    return model.network() if hasattr(model, "network") else model


def check_compatible(net: DualPointerNet, data: Iterable[Example],
                     expected_vocab_hash: str | None = None) -> None:
    if expected_vocab_hash is not None and expected_vocab_hash != net.vocab.hash():
        raise VocabMismatchError(
            f"vocabulary hash {expected_vocab_hash[:12]} does not match the model's "
            f"{net.vocab.hash()[:12]}; the model was trained with a different vocabulary")
    known = net.vocab.type2id
    for i, ex in enumerate(data):
        for ent in ex.entities:
            if ent.type not in known:
                raise VocabMismatchError(
                    f"sentence {i}: entity type {ent.type!r} is unknown to the model "
                    f"(known: {sorted(known)})")


def predict_all(model, data: Sequence[Example], dual: bool | None = None) -> list:
    net = _network(model)
    if dual is None:
        dual = getattr(model, "dual", True)
    return [net.predict(ex, dual=dual) for ex in data]


def evaluate(model, data: Sequence[Example], dual: bool | None = None,
             expected_vocab_hash: str | None = None, label: str = "") -> EvalReport:
    """Predict every sentence and score against its gold triples.

    ``model`` is a checkpoint or a network.  ``dual=False`` drops the
    subject decoder; by default a checkpoint's own setting is used.
    """
    net = _network(model)
    check_compatible(net, data, expected_vocab_hash)
    try:
        preds = predict_all(model, data, dual)
    except CorpusError as exc:
        raise VocabMismatchError(str(exc)) from None
    return micro_prf([ex.triples for ex in data], preds, data, label)


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

@dataclass
class AblationRow:
    label: str
    attn: str
    dual: bool
    report: EvalReport


@dataclass
class AblationTable:
    rows: list[AblationRow]
    seed: int | None = None

    def text(self) -> str:
        header = (f"{'variant':<20} {'attn':<7} {'decoders':<9} {'P':>7} {'R':>7} {'F1':>7} "
                  f"{'ceiling':>8}")
        lines = [f"# seed {self.seed}"] if self.seed is not None else []
        lines += [header, "-" * len(header)]
        for row in self.rows:
            r = row.report
            lines.append(f"{row.label:<20} {row.attn:<7} {'dual' if row.dual else 'forward':<9} "
                         f"{r.precision:>7.4f} {r.recall:>7.4f} {r.f1:>7.4f} {r.ceiling:>8.4f}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"seed": self.seed,
                "variants": [{"label": row.label, "attn": row.attn, "dual": row.dual,
                              **row.report.to_json()} for row in self.rows]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"


def ablation_report(variants: Sequence[tuple], data: Sequence[Example],
                    seed: int | None = None) -> AblationTable:
    """Evaluate each ``(label, model, dual)`` variant on the same data."""
    if not variants:
        raise ValueError("need at least one variant")
    rows = []
    for label, model, dual in variants:
        report = evaluate(model, data, dual=dual, label=label)
        rows.append(AblationRow(label, _network(model).attn, bool(dual), report))
    return AblationTable(rows, seed)


# ---------------------------------------------------------------------------
# error analysis
# ---------------------------------------------------------------------------

WRONG_POSITION, WRONG_RELATION, MISSED, SPURIOUS = (
    "wrong-position", "wrong-relation", "missed", "spurious")
ERROR_KINDS = (WRONG_POSITION, WRONG_RELATION, MISSED, SPURIOUS)


@dataclass
class ErrorRecord:
    sentence: int
    tokens: list[str]
    gold: set[TripleKey]
    predicted: set[TripleKey]
    errors: list[tuple[str, TripleKey]]

    def counts(self) -> Counter:
        return Counter(kind for kind, _ in self.errors)

    def to_json(self) -> dict:
        fmt = lambda ts: [list(t) for t in sorted(ts)]
        return {"sentence": self.sentence, "text": " ".join(self.tokens),
                "gold": fmt(self.gold), "predicted": fmt(self.predicted),
                "errors": [{"kind": k, "triple": list(t)} for k, t in self.errors]}


def classify_errors(gold: set[TripleKey], pred: set[TripleKey]) -> list[tuple[str, TripleKey]]:
    """Label every mismatched triple with exactly one error kind.

    Gold triples without an exact prediction are ``missed``.  A wrong
    prediction is ``wrong-relation`` when its entity pair is a gold pair,
    ``wrong-position`` when it keeps a gold triple's relation and subject
    (or object) but points at the wrong partner, and ``spurious`` otherwise.
    """
    gold_pairs = {(s, o) for s, _, o in gold}
    anchors = {(s, r, "s") for s, r, _ in gold} | {(o, r, "o") for _, r, o in gold}
    errors = [(MISSED, t) for t in sorted(gold - pred)]
    for t in sorted(pred - gold):
        s, r, o = t
        if (s, o) in gold_pairs:
            errors.append((WRONG_RELATION, t))
        elif (s, r, "s") in anchors or (o, r, "o") in anchors:
            errors.append((WRONG_POSITION, t))
        else:
            errors.append((SPURIOUS, t))
    return errors


def error_report(model, data: Sequence[Example], limit: int | None = None,
                 dual: bool | None = None) -> list[ErrorRecord]:
    """Sentences whose prediction differs from gold, at most ``limit`` of them."""
    records = []
    for i, (ex, pred) in enumerate(zip(data, predict_all(model, data, dual))):
        g, p = ex.triple_set(), as_triple_set(pred)
        if g == p:
            continue
        records.append(ErrorRecord(i, list(ex.tokens), g, p, classify_errors(g, p)))
        if limit is not None and len(records) >= limit:
            break
    return records
