"""Seeded generator of small relation-extraction corpora.

Every sentence realizes one pattern; a relation is signalled by a cue word
fixed per label, so the mapping from surface to triples is learnable:

    normal       S cue O  [, S' cue' O']
    chain        A cue B cue' C
    seo_1_to_n   S cue O1 and cue' O2 [and cue'' O3]
    seo_n_to_1   S1 cue and S2 cue' [and S3 cue''] O

Filler words and an optional unrelated entity pad the clauses.  All
generated triple sets have pointer-target coverage 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .example import Entity, Example, Triple

PATTERNS = ("normal", "seo_1_to_n", "seo_n_to_1", "chain")
CONNECTORS = ("and", ",", ".")
ENTITY_TYPES = ("PER", "ORG", "LOC", "MISC")
_ONSETS = "b d f g k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


@dataclass
class SyntheticSpec:
    n_sentences: int = 300
    vocab_size: int = 60
    relation_labels: tuple[str, ...] = ("r0", "r1", "r2", "r3", "r4")
    pattern_mix: dict[str, float] = field(
        default_factory=lambda: {"normal": 0.5, "seo_1_to_n": 0.25, "seo_n_to_1": 0.25}
    )
    max_entities: int = 5
    seed: int = 0
    fanout: tuple[int, int] = (2, 3)
    distractor_prob: float = 0.3
    entity_types: tuple[str, ...] = ENTITY_TYPES

    def validate(self) -> None:
        if self.n_sentences < 0:
            raise ValueError("n_sentences must be >= 0")
        if self.vocab_size < 20:
            raise ValueError("vocab_size must be >= 20")
        if self.max_entities < 2:
            raise ValueError("max_entities must be >= 2")
        if not self.relation_labels:
            raise ValueError("need at least one relation label")
        if len(set(self.relation_labels)) != len(self.relation_labels):
            raise ValueError("relation labels must be distinct")
        unknown = set(self.pattern_mix) - set(PATTERNS)
        if unknown:
            raise ValueError(f"unknown patterns {sorted(unknown)}; choose from {PATTERNS}")
        if any(w < 0 for w in self.pattern_mix.values()) or sum(self.pattern_mix.values()) <= 0:
            raise ValueError("pattern mix weights must be non-negative with a positive total")
        lo, hi = self.fanout
        if lo < 2 or hi < lo:
            raise ValueError(f"fanout must satisfy 2 <= min <= max, got {self.fanout}")
        for pat in ("seo_1_to_n", "seo_n_to_1", "chain"):
            if self.pattern_mix.get(pat, 0) > 0 and self.max_entities < 3:
                raise ValueError(f"pattern {pat} needs max_entities >= 3")
        reserved = len(self.relation_labels) + len(CONNECTORS)
        if self.vocab_size - reserved < 2 + len(self.entity_types):
            raise ValueError(
                f"vocab_size {self.vocab_size} leaves too few words after {reserved} cue/connector words"
            )


@dataclass
class Lexicon:
    cues: dict[str, str]
    fillers: list[str]
    entity_words: dict[str, list[str]]


def _pseudo_words(rng: np.random.Generator, n: int) -> list[str]:
    words: list[str] = []
    seen = set(CONNECTORS)
    while len(words) < n:
        syllables = rng.integers(2, 4)
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syllables))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def build_lexicon(spec: SyntheticSpec, rng: np.random.Generator) -> Lexicon:
    n_free = spec.vocab_size - len(CONNECTORS)
    words = _pseudo_words(rng, n_free)
    n_rel = len(spec.relation_labels)
    cues = dict(zip(spec.relation_labels, words[:n_rel]))
    rest = words[n_rel:]
    n_fill = max(1, len(rest) // 3)
    fillers, ent = rest[:n_fill], rest[n_fill:]
    k = len(spec.entity_types)
    entity_words = {t: ent[i::k] for i, t in enumerate(spec.entity_types)}
    return Lexicon(cues, fillers, entity_words)


def _allocate(n: int, mix: dict[str, float]) -> list[str]:
    """Pattern per sentence, counts by largest remainder, in PATTERNS order."""
    total = sum(mix.values())
    names = [p for p in PATTERNS if mix.get(p, 0) > 0]
    quotas = [n * mix[p] / total for p in names]
    counts = [int(np.floor(q)) for q in quotas]
    leftovers = sorted(range(len(names)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in leftovers[: n - sum(counts)]:
        counts[i] += 1
    return [p for p, c in zip(names, counts) for _ in range(c)]


class _Builder:
    def __init__(self, spec: SyntheticSpec, lex: Lexicon, rng: np.random.Generator):
        self.spec, self.lex, self.rng = spec, lex, rng
        self.tokens: list[str] = []
        self.entities: list[Entity] = []
        self.used_surfaces: set[tuple[str, ...]] = set()

    def word(self, w: str) -> None:
        self.tokens.append(w)

    def filler(self, lo: int = 0, hi: int = 2) -> None:
        for _ in range(self.rng.integers(lo, hi + 1)):
            self.word(self.lex.fillers[self.rng.integers(len(self.lex.fillers))])

    def entity(self) -> int:
        rng = self.rng
        etype = self.spec.entity_types[rng.integers(len(self.spec.entity_types))]
        pool = self.lex.entity_words[etype]
        for _ in range(50):
            length = 1 if rng.random() < 0.6 else 2
            surface = tuple(pool[rng.integers(len(pool))] for _ in range(length))
            if surface not in self.used_surfaces:
                break
        self.used_surfaces.add(surface)
        start = len(self.tokens)
        self.tokens.extend(surface)
        self.entities.append(Entity(start, len(self.tokens), etype))
        return len(self.entities) - 1

    def cue(self) -> str:
        labels = self.spec.relation_labels
        rel = labels[self.rng.integers(len(labels))]
        self.word(self.lex.cues[rel])
        return rel


def _realize(pattern: str, spec: SyntheticSpec, b: _Builder) -> list[Triple]:
    rng = b.rng
    triples = []
    budget = spec.max_entities
    b.filler()
    if pattern == "normal":
        clauses = 2 if budget >= 4 and rng.random() < 0.5 else 1
        for c in range(clauses):
            if c:
                b.word(",")
                b.filler(0, 1)
            s = b.entity()
            rel = b.cue()
            triples.append(Triple(s, rel, b.entity()))
        used = 2 * clauses
    elif pattern == "chain":
        a = b.entity()
        r1 = b.cue()
        mid = b.entity()
        r2 = b.cue()
        c = b.entity()
        triples += [Triple(a, r1, mid), Triple(mid, r2, c)]
        used = 3
    elif pattern == "seo_1_to_n":
        n = int(rng.integers(spec.fanout[0], min(spec.fanout[1], budget - 1) + 1))
        s = b.entity()
        for k in range(n):
            if k:
                b.word("and")
            rel = b.cue()
            triples.append(Triple(s, rel, b.entity()))
        used = n + 1
    elif pattern == "seo_n_to_1":
        n = int(rng.integers(spec.fanout[0], min(spec.fanout[1], budget - 1) + 1))
        pending = []
        for k in range(n):
            if k:
                b.word("and")
            pending.append((b.entity(), b.cue()))
        o = b.entity()
        triples += [Triple(s, rel, o) for s, rel in pending]
        used = n + 1
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    b.filler()
    if used < budget and rng.random() < spec.distractor_prob:
        b.word(",")
        b.filler(1, 2)
        b.entity()
        b.filler(0, 1)
    b.word(".")
    return triples


def generate_synthetic(spec: SyntheticSpec | None = None, **overrides) -> list[Example]:
    """Generate ``spec.n_sentences`` examples; identical specs give identical corpora."""
    if spec is None:
        spec = SyntheticSpec(**overrides)
    elif overrides:
        spec = SyntheticSpec(**{**spec.__dict__, **overrides})
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lex = build_lexicon(spec, rng)
    patterns = _allocate(spec.n_sentences, spec.pattern_mix)
    patterns = [patterns[i] for i in rng.permutation(len(patterns))]
    corpus = []
    for pattern in patterns:
        b = _Builder(spec, lex, rng)
        triples = _realize(pattern, spec, b)
        corpus.append(Example(b.tokens, b.entities, triples, pattern=pattern).validate())
    return corpus
