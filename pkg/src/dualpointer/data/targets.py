"""Supervision targets for the object (forward) and subject (backward) pointers.

Each entity has one forward slot (its object) and one backward slot (its
subject).  Gold triples are bound greedily in (subject, object) order to
the subject's forward slot, else the object's backward slot.  Triples that
find both slots taken stay uncovered and lower ``coverage``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .example import Example, Triple
from .vocab import NONE_RELATION

NULL = -1


@dataclass
class PointerTargets:
    obj_pos: list[int]
    obj_rel: list[str]
    sub_pos: list[int]
    sub_rel: list[str]
    coverage: float
    uncovered: list[Triple]

    def obj_slots(self) -> list[int]:
        """Slot indices into the pointer memory: 0 is NULL, entity ``k`` is ``k + 1``."""
        return [p + 1 for p in self.obj_pos]

    def sub_slots(self) -> list[int]:
        return [p + 1 for p in self.sub_pos]

    def triples(self) -> set[tuple[int, str, int]]:
        """Triples these targets encode (always a subset of gold)."""
        out = set()
        for t, (p, r) in enumerate(zip(self.obj_pos, self.obj_rel)):
            if p != NULL:
                out.add((t, r, p))
        for t, (p, r) in enumerate(zip(self.sub_pos, self.sub_rel)):
            if p != NULL:
                out.add((p, r, t))
        return out


def compute_pointer_targets(ex: Example) -> PointerTargets:
    m = ex.n_entities
    obj_pos, obj_rel = [NULL] * m, [NONE_RELATION] * m
    sub_pos, sub_rel = [NULL] * m, [NONE_RELATION] * m
    uncovered = []
    for t in sorted(ex.triples, key=lambda t: (t.subject, t.object, t.relation)):
        if obj_pos[t.subject] == NULL:
            obj_pos[t.subject], obj_rel[t.subject] = t.object, t.relation
        elif sub_pos[t.object] == NULL:
            sub_pos[t.object], sub_rel[t.object] = t.subject, t.relation
        else:
            uncovered.append(t)
    total = len(ex.triples)
    coverage = 1.0 if total == 0 else (total - len(uncovered)) / total
    return PointerTargets(obj_pos, obj_rel, sub_pos, sub_rel, coverage, uncovered)
