"""Symptom event type system and the Assertion merge/unmerge transforms.

Gold annotations are stored *unmerged*: a trigger (SSx) entity plus an
Assertion entity over the same span, linked by a relation. The extraction
model is trained on the *merged* representation, in which the trigger entity
itself carries the Assertion subtype.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence


class EntityType(str, enum.Enum):
    SSX = "SSx"
    ASSERTION = "Assertion"
    CHANGE = "Change"
    SEVERITY = "Severity"
    ANATOMY = "Anatomy"
    CHARACTERISTICS = "Characteristics"
    DURATION = "Duration"
    FREQUENCY = "Frequency"

    @property
    def is_trigger(self) -> bool:
        return self is EntityType.SSX

    @property
    def is_labeled(self) -> bool:
        return self in LABELED_ARGUMENTS

    @property
    def is_span_only(self) -> bool:
        return self in SPAN_ONLY_ARGUMENTS


SUBTYPES: dict[EntityType, tuple[str, ...]] = {
    EntityType.ASSERTION: (
        "present", "absent", "possible", "conditional", "hypothetical", "not patient",
    ),
    EntityType.CHANGE: ("no change", "worsened", "improved", "resolved"),
    EntityType.SEVERITY: ("mild", "moderate", "severe"),
}
LABELED_ARGUMENTS = (EntityType.ASSERTION, EntityType.CHANGE, EntityType.SEVERITY)
SPAN_ONLY_ARGUMENTS = (
    EntityType.ANATOMY, EntityType.CHARACTERISTICS, EntityType.DURATION, EntityType.FREQUENCY,
)

NEGATIVE_LABEL = "None"
UNASSERTED_LABEL = "SSx"


def _build_label_space() -> tuple[str, ...]:
    labels = [NEGATIVE_LABEL]
    labels += [f"Assertion:{s}" for s in SUBTYPES[EntityType.ASSERTION]]
    labels.append(UNASSERTED_LABEL)
    for t in (EntityType.CHANGE, EntityType.SEVERITY):
        labels += [f"{t.value}:{s}" for s in SUBTYPES[t]]
    labels += [t.value for t in SPAN_ONLY_ARGUMENTS]
    return tuple(labels)


# Merged label space used by the entity classifier; index 0 is the negative class.
LABEL_SPACE: tuple[str, ...] = _build_label_space()
LABEL_INDEX: dict[str, int] = {name: i for i, name in enumerate(LABEL_SPACE)}
NUM_LABELS = len(LABEL_SPACE)
assert NUM_LABELS == 6 + 1 + 4 + 3 + 4 + 1


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Entity:
    """A typed token span ``[start, end)`` within one sentence.

    In the merged representation an SSx entity may carry an Assertion
    subtype; everywhere else subtypes belong to labeled arguments only.
    """

    id: str
    type: EntityType
    start: int
    end: int
    subtype: Optional[str] = None

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def label(self) -> str:
        if self.type is EntityType.SSX:
            return f"Assertion:{self.subtype}" if self.subtype else UNASSERTED_LABEL
        if self.subtype is not None:
            return f"{self.type.value}:{self.subtype}"
        return self.type.value

    def key(self) -> tuple:
        return (self.type.value, self.subtype or "", self.start, self.end)


@dataclass(frozen=True)
class Relation:
    head: str
    tail: str


@dataclass(frozen=True)
class Event:
    trigger: Entity
    arguments: tuple[Entity, ...] = ()


@dataclass(frozen=True)
class Violation:
    where: str
    rule: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.where}: [{self.rule}] {self.message}"


def entity_from_label(id: str, label: str, start: int, end: int) -> Entity:
    """Inverse of :attr:`Entity.label` for merged-space labels."""
    if label == NEGATIVE_LABEL:
        raise SchemaError("the negative label does not name an entity")
    if label == UNASSERTED_LABEL:
        return Entity(id, EntityType.SSX, start, end)
    head, _, sub = label.partition(":")
    if head == "Assertion":
        return Entity(id, EntityType.SSX, start, end, sub)
    return Entity(id, EntityType(head), start, end, sub or None)


def events_from(entities: Sequence[Entity], relations: Sequence[Relation]) -> list[Event]:
    """One event per trigger, arguments attached through relations."""
    by_id = {e.id: e for e in entities}
    args: dict[str, list[Entity]] = {e.id: [] for e in entities if e.type.is_trigger}
    for r in relations:
        if r.head in args and r.tail in by_id and not by_id[r.tail].type.is_trigger:
            args[r.head].append(by_id[r.tail])
    return [Event(by_id[tid], tuple(a)) for tid, a in args.items()]


def merge_assertion(events: Iterable[Event]) -> list[Entity]:
    """Fold each event's Assertion argument into its trigger.

    The merged trigger keeps the trigger's id and span and takes the
    Assertion subtype. Triggers without an Assertion become the unasserted
    class. Remaining arguments pass through unchanged (shared arguments are
    emitted once).
    """
    out: list[Entity] = []
    seen: set[str] = set()
    for ev in events:
        assertions = [a for a in ev.arguments if a.type is EntityType.ASSERTION]
        if len(assertions) > 1:
            raise SchemaError(f"trigger {ev.trigger.id} has {len(assertions)} Assertion arguments")
        sub = assertions[0].subtype if assertions else None
        out.append(Entity(ev.trigger.id, EntityType.SSX, ev.trigger.start, ev.trigger.end, sub))
        for a in ev.arguments:
            if a.type is not EntityType.ASSERTION and a.id not in seen:
                seen.add(a.id)
                out.append(a)
    return out


def merge_sentence(
    entities: Sequence[Entity], relations: Sequence[Relation]
) -> tuple[list[Entity], list[Relation]]:
    """Merged training view of one sentence's gold annotation."""
    merged = merge_assertion(events_from(entities, relations))
    linked = {a.id for a in merged}
    # orphan arguments keep their entity label; they simply own no relation
    for e in entities:
        if e.id not in linked and e.type is not EntityType.ASSERTION and not e.type.is_trigger:
            merged.append(e)
    assertion_ids = {e.id for e in entities if e.type is EntityType.ASSERTION}
    rels = [r for r in relations if r.tail not in assertion_ids]
    return merged, rels


def unmerge_assertion(
    entities: Sequence[Entity], relations: Sequence[Relation]
) -> tuple[list[Entity], list[Relation]]:
    out_e: list[Entity] = []
    out_r = list(relations)
    for e in entities:
        if e.type is EntityType.SSX and e.subtype is not None:
            aid = f"{e.id}:A"
            out_e.append(Entity(e.id, EntityType.SSX, e.start, e.end))
            out_e.append(Entity(aid, EntityType.ASSERTION, e.start, e.end, e.subtype))
            out_r.append(Relation(e.id, aid))
        else:
            out_e.append(e)
    return out_e, out_r


def annotation_multiset(entities: Sequence[Entity], relations: Sequence[Relation]) -> tuple[Counter, Counter]:
    """Id-free view of an annotation, used for round-trip comparisons."""
    by_id = {e.id: e for e in entities}
    ents = Counter(e.key() for e in entities)
    rels = Counter((by_id[r.head].key(), by_id[r.tail].key()) for r in relations)
    return ents, rels


def validate_sentence(
    entities: Sequence[Entity], relations: Sequence[Relation], n_tokens: int, where: str = ""
) -> list[Violation]:
    out: list[Violation] = []
    by_id: dict[str, Entity] = {}
    for e in entities:
        loc = f"{where}entity {e.id}"
        if e.id in by_id:
            out.append(Violation(loc, "duplicate-id", "entity id used twice"))
        by_id[e.id] = e
        if not (0 <= e.start < e.end <= n_tokens):
            out.append(Violation(loc, "span-bounds", f"span [{e.start},{e.end}) outside 0..{n_tokens}"))
        if e.type.is_labeled:
            if e.subtype not in SUBTYPES[e.type]:
                out.append(Violation(loc, "subtype", f"{e.type.value} cannot carry subtype {e.subtype!r}"))
        elif e.subtype is not None:
            out.append(Violation(loc, "subtype", f"{e.type.value} carries no subtype, got {e.subtype!r}"))

    n_assert: Counter = Counter()
    for r in relations:
        loc = f"{where}relation {r.head}->{r.tail}"
        head, tail = by_id.get(r.head), by_id.get(r.tail)
        if head is None or tail is None:
            out.append(Violation(loc, "dangling", "relation references an unknown entity"))
            continue
        if not head.type.is_trigger:
            out.append(Violation(loc, "head-type", f"head must be SSx, got {head.type.value}"))
        if tail.type.is_trigger:
            out.append(Violation(loc, "tail-type", "tail must be an argument, got SSx"))
        if tail.type is EntityType.ASSERTION:
            n_assert[r.head] += 1
    for tid, n in n_assert.items():
        if n > 1:
            out.append(Violation(f"{where}entity {tid}", "assertion-count", f"{n} Assertion arguments"))

    ents = sorted(entities, key=lambda e: (e.type.value, e.start, e.end))
    for a, b in zip(ents, ents[1:]):
        if a.type is b.type and b.start < a.end:
            out.append(Violation(
                f"{where}entity {b.id}", "overlap", f"overlaps {a.id} of the same type", severity="warning",
            ))
    return out


def validate(corpus) -> list[Violation]:
    """Check every sentence of ``corpus`` against the schema invariants.

    Overlapping same-type entities are reported with ``severity="warning"``;
    everything else is an error.
    """
    out: list[Violation] = []
    for doc in corpus.documents:
        for i, sent in enumerate(doc.sentences):
            out += validate_sentence(sent.entities, sent.relations, len(sent.tokens), f"{doc.id}#{i} ")
    return out
