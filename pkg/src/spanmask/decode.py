"""Inference: span labelling, relation linking, event construction."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import torch

from .corpus import Corpus, Sentence, Vocab, enumerate_spans
from .model import SpanModel, classify_relation, pad_sequences
from .schema import LABEL_SPACE, Entity, Event, Relation, entity_from_label, events_from, unmerge_assertion


@dataclass(frozen=True)
class Thresholds:
    relation: float = 0.5


def construct_events(entities: Sequence[Entity], relations: Sequence[Relation]) -> list[Event]:
    """One event per trigger; linked non-trigger entities become its arguments.

    An argument may belong to several events. Arguments without a relation
    join no event.
    """
    return events_from(entities, relations)


@torch.no_grad()
def _predict_batch(model: SpanModel, sents: Sequence[Sentence], vocab: Vocab, thresholds: Thresholds):
    W = model.config.max_span_width
    ids, key_pad = pad_sequences([vocab.encode(s.surfaces) for s in sents], vocab.cls_id, vocab.pad_id)
    h, ctx = model.encode(ids, key_pad)
    sb, ss, se = [], [], []
    for b, s in enumerate(sents):
        for c in enumerate_spans(len(s), W):
            sb.append(b), ss.append(c.start), se.append(c.end)
    out = [([], []) for _ in sents]
    if not sb:
        return out
    T = lambda xs: torch.tensor(xs, dtype=torch.long)
    sb_t, ss_t, se_t = T(sb), T(ss), T(se)
    labels = model.entity_logits(model.span_repr(h, ctx, sb_t, ss_t, se_t)).argmax(-1).tolist()
    counters = [0] * len(sents)
    for b, s, e, lab in zip(sb, ss, se, labels):
        if lab == 0:
            continue
        counters[b] += 1
        out[b][0].append(entity_from_label(f"T{counters[b]}", LABEL_SPACE[lab], s, e))
    pb, hs, he, ts, te, pairs = [], [], [], [], [], []
    for b, (ents, _) in enumerate(out):
        trig = [e for e in ents if e.type.is_trigger]
        args = [e for e in ents if not e.type.is_trigger]
        for t in trig:
            for a in args:
                pb.append(b), hs.append(t.start), he.append(t.end), ts.append(a.start), te.append(a.end)
                pairs.append((b, t.id, a.id))
    if pairs:
        pr = model.pair_repr(h, ctx, T(pb), T(hs), T(he), T(ts), T(te))
        probs = classify_relation(model.relation_logits(pr)).tolist()
        for (b, hid, tid), p in zip(pairs, probs):
            if p >= thresholds.relation:
                out[b][1].append(Relation(hid, tid))
    return out


def predict_sentence(
    model: SpanModel, sentence: Sentence, vocab: Vocab, thresholds: Thresholds = Thresholds(),
    merged: bool = False,
) -> tuple[list[Entity], list[Relation]]:
    """Prediction for one sentence, unmerged for scoring unless ``merged``."""
    model.eval()
    ents, rels = _predict_batch(model, [sentence], vocab, thresholds)[0]
    return (ents, rels) if merged else unmerge_assertion(ents, rels)


def predict_corpus(
    model: SpanModel, corpus: Corpus, vocab: Vocab, thresholds: Thresholds = Thresholds(), batch_size: int = 32
) -> Corpus:
    """Copy of ``corpus`` with gold replaced by (unmerged) predictions."""
    model.eval()
    flat = [s for d in corpus.documents for s in d.sentences]
    preds = []
    for i in range(0, len(flat), batch_size):
        chunk = flat[i: i + batch_size]
        nonempty = [s for s in chunk if len(s)]
        res = iter(_predict_batch(model, nonempty, vocab, thresholds) if nonempty else [])
        for s in chunk:
            preds.append(unmerge_assertion(*next(res)) if len(s) else ([], []))
    it = iter(preds)
    docs = []
    for d in corpus.documents:
        sents = []
        for s in d.sentences:
            ents, rels = next(it)
            sents.append(replace(s, entities=tuple(ents), relations=tuple(rels)))
        docs.append(replace(d, sentences=tuple(sents)))
    return Corpus(tuple(docs))
