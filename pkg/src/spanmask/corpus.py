"""Corpus ingestion: sentence splitting, tokenization, vocabulary, spans, JSONL I/O.

On-disk annotation format, one document per line::

    {"id": ..., "domain": ..., "text": ...,
     "sentences": [{"token_ranges": [[s, e], ...],
                    "entities": [{"id", "type", "subtype", "start", "end"}],
                    "relations": [{"head", "tail"}]}]}

Entity ``start``/``end`` are token indices within the sentence; token ranges
are character offsets into ``text``.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

from .schema import Entity, EntityType, Event, Relation, Violation, events_from, validate

PAD, UNK, CLS, MASK = "[PAD]", "[UNK]", "[CLS]", "[MASK]"
BASE_RESERVED = (PAD, UNK, CLS, MASK)
DEFAULT_MAX_SPAN_WIDTH = 10

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s+[A-Z])")


class CorpusFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CorpusInvariantError(ValueError):
    def __init__(self, violations: Sequence[Violation], line: int | None = None):
        head = "; ".join(str(v) for v in violations[:5])
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{len(violations)} schema violation(s): {head}")
        self.violations = list(violations)
        self.line = line


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    entities: tuple[Entity, ...] = ()
    relations: tuple[Relation, ...] = ()

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)

    def events(self) -> list[Event]:
        return events_from(self.entities, self.relations)

    def span_text(self, start: int, end: int) -> str:
        return " ".join(t.surface for t in self.tokens[start:end])


@dataclass(frozen=True)
class Document:
    id: str
    domain: str
    text: str
    sentences: tuple[Sentence, ...] = ()


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()

    def sentences(self) -> Iterator[tuple[str, Sentence]]:
        """Yield ``(sentence_key, sentence)`` in document order."""
        for doc in self.documents:
            for i, sent in enumerate(doc.sentences):
                yield f"{doc.id}#{i}", sent

    def __len__(self) -> int:
        return sum(len(d.sentences) for d in self.documents)

    @property
    def domains(self) -> list[str]:
        return sorted({d.domain for d in self.documents})


@dataclass(frozen=True)
class SpanCandidate:
    start: int
    end: int

    @property
    def width(self) -> int:
        return self.end - self.start


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character ranges of sentences.

    Breaks on newlines and after sentence-final punctuation that is followed
    by whitespace and an uppercase letter. Ranges are trimmed of whitespace.
    """
    out: list[tuple[int, int]] = []
    pos = 0
    for line in text.split("\n"):
        cuts = [0] + [m.end() for m in _BOUNDARY_RE.finditer(line)] + [len(line)]
        for a, b in zip(cuts, cuts[1:]):
            seg = line[a:b]
            stripped = seg.strip()
            if stripped:
                s = pos + a + (len(seg) - len(seg.lstrip()))
                out.append((s, s + len(stripped)))
        pos += len(line) + 1
    return out


def tokenize(sentence_text: str) -> list[str]:
    return [m.group().lower() for m in _TOKEN_RE.finditer(sentence_text)]


def tokenize_with_offsets(text: str, start: int = 0, end: int | None = None) -> list[Token]:
    end = len(text) if end is None else end
    return [
        Token(m.group().lower(), m.start() + start, m.end() + start)
        for m in _TOKEN_RE.finditer(text[start:end])
    ]


def make_document(doc_id: str, domain: str, text: str) -> Document:
    """Unlabeled document: split and tokenized, no gold."""
    sents = tuple(Sentence(tuple(tokenize_with_offsets(text, s, e))) for s, e in split_sentences(text))
    return Document(doc_id, domain, text, sents)


def enumerate_spans(sentence: Union[Sentence, int], max_span_width: int = DEFAULT_MAX_SPAN_WIDTH) -> list[SpanCandidate]:
    if max_span_width < 1:
        raise ValueError("max_span_width must be >= 1")
    n = sentence if isinstance(sentence, int) else len(sentence)
    return [
        SpanCandidate(i, j)
        for i in range(n)
        for j in range(i + 1, min(n, i + max_span_width) + 1)
    ]


def span_count(n: int, max_span_width: int) -> int:
    return sum(max(0, n - w + 1) for w in range(1, max_span_width + 1))


def domain_token(domain: str) -> str:
    return f"[DOM={domain}]"


class Vocab:
    """Word-level vocabulary: reserved tokens first, then by descending frequency."""

    def __init__(self, surfaces: Sequence[str], n_reserved: int):
        self.itos = list(surfaces)
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        self.n_reserved = n_reserved
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary surfaces must be unique")

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos and self.n_reserved == other.n_reserved

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def unk_id(self) -> int:
        return self.stoi[UNK]

    @property
    def cls_id(self) -> int:
        return self.stoi[CLS]

    @property
    def mask_id(self) -> int:
        return self.stoi[MASK]

    @property
    def reserved(self) -> list[str]:
        return self.itos[: self.n_reserved]

    def domain_id(self, domain: str) -> int:
        try:
            return self.stoi[domain_token(domain)]
        except KeyError:
            raise KeyError(f"no domain indicator for {domain!r}") from None

    def encode(self, surfaces: Iterable[str]) -> list[int]:
        unk = self.unk_id
        return [self.stoi.get(s, unk) for s in surfaces]

    def to_dict(self) -> dict:
        return {"itos": self.itos, "n_reserved": self.n_reserved}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(d["itos"], d["n_reserved"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=0) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(corpora: Iterable[Document], max_size: int, domains: Iterable[str] = ()) -> Vocab:
    docs = list(corpora)
    counts: Counter = Counter()
    for doc in docs:
        for sent in doc.sentences:
            counts.update(sent.surfaces)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    all_domains = sorted({d.domain for d in docs} | set(domains))
    reserved = list(BASE_RESERVED) + [domain_token(d) for d in all_domains]
    if max_size <= len(reserved):
        raise ValueError(f"max_size must exceed the {len(reserved)} reserved tokens")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [s for s, _ in ranked[: max_size - len(reserved)]]
    return Vocab(reserved + keep, len(reserved))


# ---------------------------------------------------------------------------
# JSON lines I/O


def _entity_json(e: Entity) -> dict:
    return {"id": e.id, "type": e.type.value, "subtype": e.subtype, "start": e.start, "end": e.end}


def document_to_json(doc: Document) -> dict:
    return {
        "id": doc.id,
        "domain": doc.domain,
        "text": doc.text,
        "sentences": [
            {
                "token_ranges": [[t.start, t.end] for t in s.tokens],
                "entities": [_entity_json(e) for e in s.entities],
                "relations": [{"head": r.head, "tail": r.tail} for r in s.relations],
            }
            for s in doc.sentences
        ],
    }


def document_from_json(obj: dict) -> Document:
    text = obj["text"]
    sents = []
    for s in obj["sentences"]:
        toks = []
        for a, b in s["token_ranges"]:
            if not (0 <= a < b <= len(text)):
                raise ValueError(f"token range [{a},{b}) outside text")
            toks.append(Token(text[a:b].lower(), a, b))
        ents = tuple(
            Entity(str(e["id"]), EntityType(e["type"]), int(e["start"]), int(e["end"]), e.get("subtype"))
            for e in s.get("entities", ())
        )
        rels = tuple(Relation(str(r["head"]), str(r["tail"])) for r in s.get("relations", ()))
        sents.append(Sentence(tuple(toks), ents, rels))
    return Document(str(obj["id"]), str(obj["domain"]), text, tuple(sents))


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in corpus.documents:
            f.write(json.dumps(document_to_json(doc), ensure_ascii=False, sort_keys=True) + "\n")


def load_corpus(path, check: bool = True) -> Corpus:
    """Read a JSONL corpus. Raises CorpusFormatError / CorpusInvariantError."""
    docs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                doc = document_from_json(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusFormatError(lineno, str(exc)) from exc
            if check:
                errors = [v for v in validate(Corpus((doc,))) if v.severity == "error"]
                if errors:
                    raise CorpusInvariantError(errors, line=lineno)
            docs.append(doc)
    return Corpus(tuple(docs))


def load_unlabeled(path) -> list[Document]:
    """Plain text, one document per line; the first field is the domain tag."""
    docs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            domain, _, text = line.strip().partition(" ")
            docs.append(make_document(f"u{lineno}", domain, text))
    return docs


def save_unlabeled(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d in docs:
            f.write(f"{d.domain} {d.text}\n")
