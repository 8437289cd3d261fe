"""Frequent-trigger phrase lists, dynamic trigger masking and MLM masking."""
from __future__ import annotations

import csv
import zlib
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .corpus import MASK, Corpus, Token
from .schema import EntityType

DEFAULT_TOP_K = 200
DEFAULT_MASK_RATE = 0.8
DEFAULT_MLM_RATE = 0.15


@dataclass(frozen=True)
class PhraseList:
    phrases: tuple[tuple[str, int], ...]
    source_domain: str = ""

    def __len__(self) -> int:
        return len(self.phrases)

    @property
    def surfaces(self) -> list[str]:
        return [p for p, _ in self.phrases]

    def rank_slice(self, lo: int, hi: int) -> set[str]:
        return {p for p, _ in self.phrases[lo:hi]}

    def save_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, delimiter="\t", lineterminator="\n")
            for p, n in self.phrases:
                w.writerow([p, n])

    @classmethod
    def load_tsv(cls, path, source_domain: str = "") -> "PhraseList":
        with open(path, encoding="utf-8", newline="") as f:
            rows = [r for r in csv.reader(f, delimiter="\t") if r]
        return cls(tuple((r[0], int(r[1])) for r in rows), source_domain)


@dataclass(frozen=True)
class MaskPlan:
    epoch: int
    seed: int
    positions: frozenset[tuple[str, int]]
    matched: int = 0


def trigger_surfaces(corpus: Corpus) -> Counter:
    """Lowercased surface counts of gold SSx triggers."""
    counts: Counter = Counter()
    for _, sent in corpus.sentences():
        for e in sent.entities:
            if e.type is EntityType.SSX:
                counts[sent.span_text(e.start, e.end)] += 1
    return counts


def _ranked(counts: Counter) -> list[tuple[str, int]]:
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def keep_phrase(surface: str) -> bool:
    """Single token, not punctuation-only, at least two characters."""
    return (
        " " not in surface
        and len(surface) >= 2
        and any(ch.isalnum() for ch in surface)
    )


def phrase_list_from_counts(counts: Counter, top_k: int, source_domain: str = "") -> PhraseList:
    top = _ranked(counts)[: max(top_k, 0)]
    return PhraseList(tuple((p, n) for p, n in top if keep_phrase(p)), source_domain)


def build_frequency_list(corpus: Corpus, top_k: int = DEFAULT_TOP_K, mode: str = "pooled") -> PhraseList:
    """Rank gold trigger surfaces by frequency, keep ``top_k``, then filter.

    ``mode="pooled"`` counts over the whole corpus. ``mode="union"`` builds a
    top-k list per domain tag and unions them, ordered by pooled count.
    """
    counts = trigger_surfaces(corpus)
    if not counts:
        raise ValueError("corpus has no gold triggers")
    name = "+".join(corpus.domains)
    if mode == "pooled":
        return phrase_list_from_counts(counts, top_k, name)
    if mode != "union":
        raise ValueError(f"unknown mode {mode!r}")
    keep: set[str] = set()
    for dom in corpus.domains:
        sub = Corpus(tuple(d for d in corpus.documents if d.domain == dom))
        keep |= set(phrase_list_from_counts(trigger_surfaces(sub), top_k).surfaces)
    return PhraseList(tuple((p, n) for p, n in _ranked(counts) if p in keep), name)


def _uniforms(base_seed: int, epoch: int, key: str, n: int) -> np.ndarray:
    # counter-style: draws depend only on (seed, epoch, sentence key, index)
    ss = np.random.SeedSequence([base_seed & 0xFFFFFFFFFFFFFFFF, epoch, zlib.crc32(key.encode())])
    return np.random.default_rng(ss).random(n)


def apply_dynamic_mask(
    corpus: Corpus, phrase_list: PhraseList, rate: float, epoch: int, base_seed: int
) -> tuple[Corpus, MaskPlan]:
    """Replace listed tokens by ``[MASK]`` independently with probability ``rate``.

    Matching ignores gold labels; the gold annotation objects are reused
    untouched in the returned corpus.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    vocab = set(phrase_list.surfaces)
    positions: list[tuple[str, int]] = []
    matched = 0
    docs = []
    for doc in corpus.documents:
        sents = []
        for i, sent in enumerate(doc.sentences):
            hits = [j for j, t in enumerate(sent.tokens) if t.surface in vocab]
            if not hits:
                sents.append(sent)
                continue
            key = f"{doc.id}#{i}"
            u = _uniforms(base_seed, epoch, key, len(sent.tokens))
            matched += len(hits)
            chosen = [j for j in hits if u[j] < rate]
            if not chosen:
                sents.append(sent)
                continue
            toks = list(sent.tokens)
            for j in chosen:
                toks[j] = Token(MASK, toks[j].start, toks[j].end)
                positions.append((key, j))
            sents.append(replace(sent, tokens=tuple(toks)))
        docs.append(replace(doc, sentences=tuple(sents)))
    return Corpus(tuple(docs)), MaskPlan(epoch, base_seed, frozenset(positions), matched)


def mlm_mask(
    token_ids: Sequence[int],
    rate: float,
    seed,
    *,
    mask_id: int,
    protected: Iterable[int] = (),
    random_replace: bool = False,
    vocab_size: int | None = None,
    first_word_id: int = 0,
) -> tuple[list[int], list[int], list[int]]:
    """Mask each non-protected position with probability ``rate``.

    Returns ``(masked_ids, masked_indices, original_ids)``. With
    ``random_replace`` the BERT 80/10/10 substitution is used instead of pure
    ``[MASK]`` replacement.
    """
    if not token_ids:
        raise ValueError("token_ids must be nonempty")
    rng = np.random.default_rng(seed)
    u = rng.random(len(token_ids))
    prot = set(protected)
    out = list(token_ids)
    idx = [i for i, t in enumerate(token_ids) if t not in prot and u[i] < rate]
    if random_replace:
        if vocab_size is None:
            raise ValueError("random_replace needs vocab_size")
        kind = rng.random(len(idx))
        rand_tok = rng.integers(first_word_id, vocab_size, len(idx)) if idx else []
        for k, i in enumerate(idx):
            if kind[k] < 0.8:
                out[i] = mask_id
            elif kind[k] < 0.9:
                out[i] = int(rand_tok[k])
    else:
        for i in idx:
            out[i] = mask_id
    return out, idx, [token_ids[i] for i in idx]
