"""Sentences with gold entity mentions and relation triples; JSON-lines I/O."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class CorpusError(ValueError):
    """Malformed or inconsistent corpus content."""


class ParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, order=True)
class Entity:
    start: int
    end: int
    type: str


@dataclass(frozen=True, order=True)
class Triple:
    subject: int
    relation: str
    object: int


@dataclass
class Example:
    """A tokenized sentence, its entity mentions (sorted by span) and gold triples.

    ``pattern`` is an optional tag set by the synthetic generator.
    """

    tokens: list[str]
    entities: list[Entity]
    triples: list[Triple] = field(default_factory=list)
    pattern: str | None = None

    def __post_init__(self):
        self.tokens = list(self.tokens)
        self.entities = [e if isinstance(e, Entity) else Entity(*e) for e in self.entities]
        self.triples = [t if isinstance(t, Triple) else Triple(*t) for t in self.triples]

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    def entity_text(self, i: int) -> str:
        e = self.entities[i]
        return " ".join(self.tokens[e.start:e.end])

    def entity_tokens(self, i: int) -> list[str]:
        e = self.entities[i]
        return self.tokens[e.start:e.end]

    def triple_set(self) -> set[tuple[int, str, int]]:
        return {(t.subject, t.relation, t.object) for t in self.triples}

    def validate(self) -> "Example":
        """Check span bounds, ordering and triple indices; raise :class:`CorpusError`."""
        n_tok = len(self.tokens)
        if n_tok == 0:
            raise CorpusError("sentence has no tokens")
        for e in self.entities:
            if not (0 <= e.start < e.end <= n_tok):
                raise CorpusError(f"entity span [{e.start}, {e.end}) outside {n_tok} tokens")
        keys = [(e.start, e.end) for e in self.entities]
        if keys != sorted(keys):
            raise CorpusError("entities must be sorted by (start, end)")
        m = len(self.entities)
        seen = set()
        for t in self.triples:
            if not (0 <= t.subject < m and 0 <= t.object < m):
                raise CorpusError(
                    f"triple ({t.subject}, {t.relation}, {t.object}) references entity outside 0..{m - 1}"
                )
            if t.subject == t.object:
                raise CorpusError(f"triple relates entity {t.subject} to itself")
            key = (t.subject, t.relation, t.object)
            if key in seen:
                raise CorpusError(f"duplicate triple {key}")
            seen.add(key)
        return self

    def to_json(self) -> dict:
        record = {
            "tokens": self.tokens,
            "entities": [{"start": e.start, "end": e.end, "type": e.type} for e in self.entities],
            "triples": [{"subject": t.subject, "relation": t.relation, "object": t.object}
                        for t in self.triples],
        }
        if self.pattern is not None:
            record["pattern"] = self.pattern
        return record

    @classmethod
    def from_json(cls, record: dict, require_triples: bool = True) -> "Example":
        if not isinstance(record, dict):
            raise CorpusError("record must be a JSON object")
        try:
            tokens = record["tokens"]
            entities = [Entity(int(e["start"]), int(e["end"]), str(e["type"])) for e in record["entities"]]
            if "triples" in record:
                triples = [Triple(int(t["subject"]), str(t["relation"]), int(t["object"]))
                           for t in record["triples"]]
            elif require_triples:
                raise KeyError("triples")
            else:
                triples = []
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"bad record field: {exc}") from exc
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise CorpusError("tokens must be a list of strings")
        return cls(tokens, entities, triples, record.get("pattern"))


def load_corpus(path, vocab=None, require_triples: bool = True) -> list[Example]:
    """Read a JSON-lines corpus and validate every record.

    With ``vocab`` the entity types are checked against its closed set.
    Unknown words are not rewritten here: featurization maps them to UNK
    so the character CNN still sees their surface form.
    """
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            try:
                ex = Example.from_json(record, require_triples=require_triples).validate()
            except CorpusError as exc:
                raise ParseError(str(exc), lineno) from None
            if vocab is not None:
                for e in ex.entities:
                    if e.type not in vocab.type2id:
                        raise ParseError(f"unknown entity type {e.type!r}", lineno)
            examples.append(ex)
    return examples


def dump_corpus(examples: Iterable[Example]) -> str:
    return "".join(json.dumps(ex.to_json(), ensure_ascii=False) + "\n" for ex in examples)


def save_corpus(examples: Sequence[Example], path) -> None:
    atomic_write_text(path, dump_corpus(examples))


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
