"""Small builders shared by the test modules."""
from __future__ import annotations

import random
from typing import Sequence

from spanmask.corpus import Corpus, Document, Sentence, Token
from spanmask.schema import SUBTYPES, Entity, EntityType, Relation

E = EntityType


def sentence(words: str | Sequence[str], ents=(), rels=()) -> Sentence:
    """``ents`` items are ``(id, type, start, end[, subtype])``; ``rels`` are ``(head, tail)``."""
    if isinstance(words, str):
        words = words.split()
    toks, pos = [], 0
    for w in words:
        toks.append(Token(w, pos, pos + len(w)))
        pos += len(w) + 1
    entities = tuple(Entity(e[0], e[1], e[2], e[3], e[4] if len(e) > 4 else None) for e in ents)
    return Sentence(tuple(toks), entities, tuple(Relation(h, t) for h, t in rels))


def document(doc_id: str, sents: Sequence[Sentence], domain: str = "d") -> Document:
    text = " ".join(" ".join(s.surfaces) for s in sents)
    # rebuild offsets so they index into the joined text
    out, pos = [], 0
    for s in sents:
        toks = []
        for t in s.tokens:
            toks.append(Token(t.surface, pos, pos + len(t.surface)))
            pos += len(t.surface) + 1
        out.append(Sentence(tuple(toks), s.entities, s.relations))
    return Document(doc_id, domain, text, tuple(out))


def corpus(*sents: Sentence, domain: str = "d") -> Corpus:
    return Corpus((document("doc0", sents, domain),))


WORDS = ("cough", "fever", "pain", "mild", "chest", "daily", "no", "denies", "and", "in", "the", ".")


def random_sentence(rng: random.Random, max_len: int = 10, max_events: int = 3) -> Sentence:
    """Schema-valid sentence with random events; spans may overlap freely."""
    n = rng.randint(1, max_len)
    words = [rng.choice(WORDS) for _ in range(n)]
    ents: list[Entity] = []
    rels: list[Relation] = []

    def span():
        s = rng.randrange(n)
        return s, rng.randint(s + 1, min(n, s + 3))

    for k in range(rng.randint(0, max_events)):
        s, e = span()
        tid = f"T{len(ents) + 1}"
        ents.append(Entity(tid, E.SSX, s, e))
        if rng.random() < 0.7:
            aid = f"T{len(ents) + 1}"
            ents.append(Entity(aid, E.ASSERTION, s, e, rng.choice(SUBTYPES[E.ASSERTION])))
            rels.append(Relation(tid, aid))
        for _ in range(rng.randint(0, 3)):
            t = rng.choice([x for x in E if x not in (E.SSX, E.ASSERTION)])
            a, b = span()
            sub = rng.choice(SUBTYPES[t]) if t in SUBTYPES else None
            aid = f"T{len(ents) + 1}"
            ents.append(Entity(aid, t, a, b, sub))
            rels.append(Relation(tid, aid))
    return Sentence(sentence(words).tokens, tuple(ents), tuple(rels))


def random_corpus(rng: random.Random, max_sents: int = 5) -> Corpus:
    return Corpus((document("r", [random_sentence(rng) for _ in range(rng.randint(1, max_sents))]),))


def perturb(sent: Sentence, rng: random.Random) -> Sentence:
    """A plausible prediction: drop, shift, relabel, relink and add entities."""
    n = len(sent)
    ents = {e.id: e for e in sent.entities}
    rels = list(sent.relations)
    for e in list(ents.values()):
        r = rng.random()
        if r < 0.15:
            del ents[e.id]
        elif r < 0.3:
            s = max(0, min(n - 1, e.start + rng.choice((-1, 1))))
            ents[e.id] = Entity(e.id, e.type, s, max(s + 1, min(n, e.end + rng.choice((-1, 0, 1)))), e.subtype)
        elif r < 0.4 and e.type in SUBTYPES:
            ents[e.id] = Entity(e.id, e.type, e.start, e.end, rng.choice(SUBTYPES[e.type]))
    rels = [r for r in rels if r.head in ents and r.tail in ents]
    trig = [e for e in ents.values() if e.type is E.SSX]
    if trig and rels and rng.random() < 0.3:
        i = rng.randrange(len(rels))
        rels[i] = Relation(rng.choice(trig).id, rels[i].tail)
    for k in range(rng.randint(0, 2)):
        s = rng.randrange(n)
        t = rng.choice(list(E))
        sub = rng.choice(SUBTYPES[t]) if t in SUBTYPES else None
        eid = f"P{k}"
        ents[eid] = Entity(eid, t, s, rng.randint(s + 1, n), sub)
        if t is not E.SSX and trig:
            rels.append(Relation(rng.choice(trig).id, eid))
    return Sentence(sent.tokens, tuple(ents.values()), tuple(dict.fromkeys(rels)))


def perturb_corpus(c: Corpus, rng: random.Random) -> Corpus:
    return Corpus(tuple(
        Document(d.id, d.domain, d.text, tuple(perturb(s, rng) for s in d.sentences)) for d in c.documents
    ))
